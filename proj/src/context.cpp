#include "contextshot/context.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contextshot/error.hpp"

namespace cshot {

ContextSet ContextSet::from_labels(std::vector<std::string> labels, const WordTable& words) {
  const std::size_t d = words.dim();
  const std::size_t n = labels.size();
  Tensor m({d, n});
  for (std::size_t j = 0; j < n; ++j) {
    auto col = words.row(labels[j]);
    for (std::size_t i = 0; i < d; ++i) m.at(i, j) = col[i];
  }
  return {std::move(labels), std::move(m)};
}

CcamParams CcamParams::init(std::size_t d_c, std::size_t d_w, Rng& rng) {
  return {Parameter("ccam.wk", xavier_uniform(d_c, d_w, rng)),
          Parameter("ccam.wq", xavier_uniform(d_c, d_w, rng))};
}

namespace {

void check_attention_inputs(const Tensor& s, const Tensor& w, const CcamParams& p) {
  if (s.rank() != 2 || w.rank() != 1 || s.rows() != w.size() || p.wk.value.cols() != s.rows() ||
      p.wq.value.cols() != w.size() || p.wk.value.rows() != p.wq.value.rows()) {
    throw DimensionError("ccam_attend: S " + shape_string(s.shape()) + ", w " +
                         shape_string(w.shape()) + ", W_K " + shape_string(p.wk.value.shape()) +
                         ", W_Q " + shape_string(p.wq.value.shape()));
  }
  if (s.cols() == 0) throw EmptyContextError();
}

}  // namespace

Tensor ccam_scores(const Tensor& s, const Tensor& w, const CcamParams& p) {
  check_attention_inputs(s, w, p);
  const Tensor keys = matmul(p.wk.value, s);
  const Tensor query = matmul(p.wq.value, w);
  return scale(matmul(transpose(keys), query),
               1.0 / std::sqrt(static_cast<double>(p.attention_dim())));
}

AttentionVars ccam_attend(Var s, Var w, const CcamParams& p) {
  check_attention_inputs(s.value(), w.value(), p);
  Tape& t = s.tape();
  Var keys = ad::matmul(t.param(p.wk), s);
  Var query = ad::matmul(t.param(p.wq), w);
  Var scores = ad::scale(ad::matmul(ad::transpose(keys), query),
                         1.0 / std::sqrt(static_cast<double>(p.attention_dim())));
  Var weights = ad::softmax(scores);
  return {weights, ad::matmul(s, weights)};
}

AttentionResult ccam_attend(const ContextSet& s, const Tensor& w, const CcamParams& p) {
  Tape t;
  AttentionVars v = ccam_attend(t.constant(s.matrix), t.constant(w), p);
  AttentionResult r{v.weights.value(), v.pooled.value(), {}};
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.weights[a] > r.weights[b]; });
  r.ranked.reserve(order.size());
  for (std::size_t i : order) r.ranked.emplace_back(s.labels[i], r.weights[i]);
  return r;
}

Tensor context_average(const ContextSet& s) {
  Tape t;
  return context_average(t.constant(s.matrix)).value();
}

Var context_average(Var s) {
  const Tensor& m = s.value();
  if (m.rank() != 2) throw DimensionError("context_average: expected matrix, got " + shape_string(m.shape()));
  const std::size_t n = m.cols();
  if (n == 0) throw EmptyContextError();
  Var uniform = s.tape().constant(Tensor({n}, 1.0 / static_cast<double>(n)));
  return ad::matmul(s, uniform);
}

ContextSource parse_context_source(const std::string& name) {
  if (name == "cs" || name == "C_S" || name == "train") return ContextSource::Train;
  if (name == "ct" || name == "C_T" || name == "test") return ContextSource::Test;
  if (name == "union" || name == "both" || name == "C_S+C_T") return ContextSource::Union;
  throw ConfigError("unknown context source '" + name + "' (expected cs, ct or union)");
}

std::string to_string(ContextSource source) {
  switch (source) {
    case ContextSource::Train: return "cs";
    case ContextSource::Test: return "ct";
    case ContextSource::Union: return "union";
  }
  return "union";
}

std::vector<std::string> select_context(std::span<const std::string> labels, ContextSource source,
                                        const ClassPartition& partition) {
  std::vector<std::string> out;
  for (const auto& l : labels) {
    const bool in_train = partition.train.contains(l);
    const bool in_test = partition.test.contains(l);
    const bool keep = source == ContextSource::Train  ? in_train
                      : source == ContextSource::Test ? in_test
                                                      : (in_train || in_test);
    if (keep) out.push_back(l);
  }
  return out;
}

std::vector<std::string> inject_noise(std::span<const std::string> labels, double p_noise,
                                      std::span<const std::string> vocab, Rng& rng) {
  if (!(p_noise >= 0.0 && p_noise <= 1.0)) throw DomainError("p_noise must lie in [0, 1]");
  std::vector<std::string> out(labels.begin(), labels.end());
  if (p_noise == 0.0) return out;
  if (vocab.size() < 2) throw DomainError("inject_noise: vocabulary needs at least two labels");
  for (auto& label : out) {
    if (uniform01(rng) >= p_noise) continue;
    const auto self = std::find(vocab.begin(), vocab.end(), label);
    if (self == vocab.end()) {
      label = vocab[uniform_index(rng, vocab.size())];
    } else {
      // Draw from the n - 1 other labels.
      const std::size_t skip = static_cast<std::size_t>(self - vocab.begin());
      std::size_t j = uniform_index(rng, vocab.size() - 1);
      if (j >= skip) ++j;
      label = vocab[j];
    }
  }
  return out;
}

}  // namespace cshot
