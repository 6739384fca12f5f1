#pragma once

#include <cmath>
#include <filesystem>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "contextshot/episodic.hpp"
#include "contextshot/gradcheck.hpp"
#include "contextshot/tensor.hpp"
#include "reference_model.hpp"

namespace cshot {

inline void PrintTo(const Tensor& t, std::ostream* os) {
  *os << shape_string(t.shape()) << " {";
  for (std::size_t i = 0; i < t.size(); ++i) *os << (i ? ", " : "") << t[i];
  *os << "}";
}

}  // namespace cshot

namespace cshot::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * standard_normal(rng);
  return t;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Small corpus and model for finite-difference checks.
inline CorpusSpec tiny_corpus_spec(std::uint64_t seed = 3) {
  CorpusSpec s;
  s.n_classes = 12;
  s.instances_per_class = 8;
  s.d_f = 8;
  s.d_w = 4;
  s.group_size = 3;
  s.min_count = 1;
  s.seed = seed;
  return s;
}

inline ModelDims tiny_dims() {
  ModelDims d;
  d.d_f = 8;
  d.d_x = 8;
  d.d_w = 4;
  d.d_z = 6;
  return d;
}

// Runs one forward/backward of the episode loss into the parameters' grad
// buffers and compares against central differences of the long double
// reference loss.
inline GradCheckResult check_episode_gradients(const Corpus& corpus, const Episode& ep,
                                               ModelVariant variant, ModelParams& params,
                                               double h = 1e-5) {
  auto list = params.parameters();
  params.zero_grad();
  {
    Tape t;
    auto g = build_episode_graph(t, corpus, ep, variant, params);
    Var loss = episode_loss(g.logits, g.labels);
    t.backward(loss);
    t.accumulate_grads(list);
  }
  auto loss_fn = [&] { return reference_episode_loss(corpus, ep, variant, params); };
  return grad_check(loss_fn, list, h);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("contextshot-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cshot::testing
