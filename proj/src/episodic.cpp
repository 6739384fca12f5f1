#include "contextshot/episodic.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <unordered_map>

#include "contextshot/error.hpp"

namespace cshot {

using nlohmann::json;

namespace {

template <typename Fn>
void reject_unknown_keys(const json& j, std::initializer_list<const char*> keys, const char* what,
                         Fn&& read) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
    }
  }
  try {
    read();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

}  // namespace

void EpisodeSpec::validate() const {
  if (ways < 2) throw SpecError("episodes need at least 2 ways");
  if (shots < 1) throw SpecError("episodes need at least 1 shot");
  if (queries < 1) throw SpecError("episodes need at least 1 query per class");
  if (!(p_noise >= 0.0 && p_noise <= 1.0)) throw SpecError("p_noise must lie in [0, 1]");
}

void to_json(json& j, const EpisodeSpec& s) {
  j = json{{"ways", s.ways},
           {"shots", s.shots},
           {"queries", s.queries},
           {"context_source", to_string(s.source)},
           {"p_noise", s.p_noise}};
}

void from_json(const json& j, EpisodeSpec& s) {
  reject_unknown_keys(j, {"ways", "shots", "queries", "context_source", "p_noise"}, "episode", [&] {
    read_opt(j, "ways", s.ways);
    read_opt(j, "shots", s.shots);
    read_opt(j, "queries", s.queries);
    read_opt(j, "p_noise", s.p_noise);
    if (j.contains("context_source")) s.source = parse_context_source(j.at("context_source").get<std::string>());
  });
}

void to_json(json& j, const OptimizerConfig& s) {
  j = json{{"lr", s.lr},       {"beta1", s.beta1},
           {"beta2", s.beta2}, {"eps", s.eps},
           {"episodes", s.episodes}, {"decay_every", s.decay_every}};
}

void from_json(const json& j, OptimizerConfig& s) {
  reject_unknown_keys(j, {"lr", "beta1", "beta2", "eps", "episodes", "decay_every"}, "optim", [&] {
    read_opt(j, "lr", s.lr);
    read_opt(j, "beta1", s.beta1);
    read_opt(j, "beta2", s.beta2);
    read_opt(j, "eps", s.eps);
    read_opt(j, "episodes", s.episodes);
    read_opt(j, "decay_every", s.decay_every);
  });
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"variant", r.variant}, {"spec", r.spec},
           {"mean", r.mean},       {"ci95", r.ci95},
           {"top_k", r.top_k},     {"n_episodes", r.per_episode.size()},
           {"seed", r.seed},       {"per_episode", r.per_episode}};
}

void from_json(const json& j, EvalReport& r) {
  r.variant = j.at("variant").get<std::string>();
  r.spec = j.at("spec").get<EpisodeSpec>();
  r.mean = j.at("mean").get<double>();
  r.ci95 = j.at("ci95").get<double>();
  r.top_k = j.at("top_k").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.per_episode = j.at("per_episode").get<std::vector<double>>();
}

// ---------------------------------------------------------------------------
// Sampling

EpisodeSampler::EpisodeSampler(const Corpus& corpus, std::vector<std::string> pool)
    : corpus_(&corpus), pool_(std::move(pool)), partition_(corpus.partition()),
      noise_vocab_(corpus.train_classes) {
  auto by_class = corpus.instances_by_class();
  members_.reserve(pool_.size());
  for (const auto& c : pool_) {
    auto it = by_class.find(c);
    members_.push_back(it == by_class.end() ? std::vector<std::size_t>{} : it->second);
  }
}

Episode EpisodeSampler::sample(const EpisodeSpec& spec, Rng& rng) const {
  spec.validate();
  // Drawn unconditionally so the class/instance stream is the same for
  // every p_noise value.
  Rng noise_rng(rng());
  const std::size_t need = spec.shots + spec.queries;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (members_[i].size() >= need) eligible.push_back(i);
  }
  if (eligible.size() < spec.ways) {
    throw SamplingError("need " + std::to_string(spec.ways) + " classes with at least " +
                        std::to_string(need) + " instances each, but only " +
                        std::to_string(eligible.size()) + " of " + std::to_string(pool_.size()) +
                        " pool classes qualify");
  }
  for (std::size_t i = 0; i < spec.ways; ++i) {
    std::swap(eligible[i], eligible[i + uniform_index(rng, eligible.size() - i)]);
  }
  Episode ep;
  std::vector<std::vector<std::size_t>> picks(spec.ways);
  for (std::size_t r = 0; r < spec.ways; ++r) {
    const std::size_t ci = eligible[r];
    ep.roster.push_back(pool_[ci]);
    std::vector<std::size_t> m = members_[ci];
    for (std::size_t i = 0; i < need; ++i) std::swap(m[i], m[i + uniform_index(rng, m.size() - i)]);
    m.resize(need);
    picks[r] = std::move(m);
  }
  auto make_item = [&](std::size_t inst, std::size_t r) {
    auto ctx = select_context(corpus_->instances[inst].context, spec.source, partition_);
    if (spec.p_noise > 0.0) ctx = inject_noise(ctx, spec.p_noise, noise_vocab_, noise_rng);
    return EpisodeItem{inst, r, std::move(ctx)};
  };
  for (std::size_t r = 0; r < spec.ways; ++r)
    for (std::size_t i = 0; i < spec.shots; ++i) ep.support.push_back(make_item(picks[r][i], r));
  for (std::size_t r = 0; r < spec.ways; ++r)
    for (std::size_t i = spec.shots; i < need; ++i) ep.query.push_back(make_item(picks[r][i], r));
  return ep;
}

Episode sample_episode(const Corpus& corpus, std::span<const std::string> pool,
                       const EpisodeSpec& spec, Rng& rng) {
  return EpisodeSampler(corpus, {pool.begin(), pool.end()}).sample(spec, rng);
}

// ---------------------------------------------------------------------------
// Forward paths

namespace {

Var embed_item(Tape& t, const Corpus& corpus, const EpisodeItem& item, const VariantFlags& f,
               const ModelParams& params, const Var* class_word) {
  const auto& inst = corpus.instances[item.instance];
  Var fx = encode_visual(t.constant(Tensor::vector(inst.features)), params.encoder);
  // An empty context after filtering leaves the visual embedding as is.
  if (!f.uses_context || item.context.empty()) return fx;
  Var s = t.constant(ContextSet::from_labels(item.context, corpus.words).matrix);
  Var c = (class_word && f.pooling == ContextPooling::Attention)
              ? ccam_attend(s, *class_word, params.ccam).pooled
              : context_average(s);
  return gated_fuse(fx, project_context(c, params.projector), params.gate).fused;
}

}  // namespace

EpisodeGraph build_episode_graph(Tape& t, const Corpus& corpus, const Episode& episode,
                                 ModelVariant variant, const ModelParams& params) {
  const VariantFlags f = flags(variant);
  const std::size_t m = episode.roster.size();
  std::vector<Var> class_words;
  class_words.reserve(m);
  for (const auto& c : episode.roster) class_words.push_back(t.constant(corpus.words.vector(c)));

  std::vector<std::vector<Var>> support(m);
  for (const auto& item : episode.support) {
    // Attention is conditioned on the class word, which only support items know.
    support[item.roster_index].push_back(
        embed_item(t, corpus, item, f, params, &class_words[item.roster_index]));
  }
  std::vector<Var> prototypes;
  prototypes.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (support[k].empty()) throw ContractError("roster class without support items");
    Var proto = class_prototype(support[k]);
    if (f.uses_word_refine) proto = refine_with_word(proto, class_words[k], params.refine).refined;
    prototypes.push_back(proto);
  }

  EpisodeGraph g;
  std::vector<Var> neg_dist(m);
  for (const auto& item : episode.query) {
    Var q = embed_item(t, corpus, item, f, params, nullptr);
    for (std::size_t k = 0; k < m; ++k) {
      Var d = params.dims.squared_distance ? ad::squared_distance(q, prototypes[k])
                                           : ad::euclidean_distance(q, prototypes[k]);
      neg_dist[k] = ad::scale(d, -1.0);
    }
    g.logits.push_back(ad::stack(neg_dist));
    g.labels.push_back(item.roster_index);
  }
  return g;
}

std::vector<Tensor> forward_episode(const Corpus& corpus, const Episode& episode,
                                    ModelVariant variant, const ModelParams& params) {
  Tape t;
  EpisodeGraph g = build_episode_graph(t, corpus, episode, variant, params);
  std::vector<Tensor> out;
  out.reserve(g.logits.size());
  for (const Var& l : g.logits) out.push_back(softmax(l.value()));
  return out;
}

Tensor embed_query(const Corpus& corpus, std::size_t instance, std::span<const std::string> context,
                   ModelVariant variant, const ModelParams& params) {
  if (instance >= corpus.instances.size()) throw LookupError("instance index out of range");
  Tape t;
  const EpisodeItem item{instance, 0, {context.begin(), context.end()}};
  return embed_item(t, corpus, item, flags(variant), params, nullptr).value();
}

Var episode_loss(std::span<const Var> logits, std::span<const std::size_t> labels) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw ContractError("episode_loss: need one label per query and at least one query");
  }
  std::vector<Var> terms;
  terms.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) terms.push_back(ad::cross_entropy(logits[i], labels[i]));
  return ad::mean(terms);
}

double episode_loss(std::span<const Tensor> logits, std::span<const std::size_t> labels) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw ContractError("episode_loss: need one label per query and at least one query");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (labels[i] >= logits[i].size()) throw DimensionError("episode_loss: label out of range");
    s -= log_softmax(logits[i])[labels[i]];
  }
  return s / static_cast<double>(logits.size());
}

bool in_top_k(std::span<const double> probs, std::size_t label, std::size_t k) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > probs[label] || (probs[j] == probs[label] && j < label)) ++rank;
  }
  return rank < k;
}

// ---------------------------------------------------------------------------
// Optimisation

double learning_rate_at(std::size_t episode, const OptimizerConfig& cfg) {
  std::size_t decays = 0;
  if (cfg.decay_every > 0) {
    decays = episode / cfg.decay_every;
  } else if (cfg.episodes > 0) {
    decays = std::min<std::size_t>(2, 3 * episode / cfg.episodes);
  }
  return cfg.lr * std::pow(10.0, -static_cast<double>(decays));
}

Adam::Adam(std::vector<Parameter*> params, const OptimizerConfig& cfg)
    : params_(std::move(params)), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      p.value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

TrainResult train(const Corpus& corpus, const TrainOptions& opts) {
  return train(corpus, opts, ModelParams::init(opts.dims, derive_seed(opts.seed, 0)));
}

TrainResult train(const Corpus& corpus, const TrainOptions& opts, ModelParams initial) {
  opts.episode.validate();
  TrainResult result{std::move(initial), {}, {}};
  ModelParams& params = result.params;
  const auto param_list = params.parameters();
  if (opts.optim.episodes == 0) return result;

  const EpisodeSampler sampler(corpus, corpus.focal_classes(Split::Train));
  Adam adam(param_list, opts.optim);
  const std::uint64_t stream = derive_seed(opts.seed, 1);
  result.losses.reserve(opts.optim.episodes);
  for (std::size_t e = 0; e < opts.optim.episodes; ++e) {
    Rng rng(derive_seed(stream, e));
    const Episode ep = sampler.sample(opts.episode, rng);
    Tape tape;
    const EpisodeGraph g = build_episode_graph(tape, corpus, ep, opts.variant, params);
    const Var loss = episode_loss(g.logits, g.labels);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at episode " + std::to_string(e) +
                          "; parameter norm " + std::to_string(params.norm()));
    }
    tape.backward(loss);
    params.zero_grad();
    tape.accumulate_grads(param_list);
    const double lr = learning_rate_at(e, opts.optim);
    adam.step(lr);
    result.losses.push_back(value);
    result.learning_rates.push_back(lr);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

Summary summarize(std::span<const double> per_episode) {
  Summary s;
  if (per_episode.empty()) return s;
  const double n = static_cast<double>(per_episode.size());
  double sum = 0.0;
  for (double a : per_episode) sum += a;
  s.mean = sum / n;
  double var = 0.0;
  for (double a : per_episode) var += (a - s.mean) * (a - s.mean);
  s.ci95 = 1.96 * std::sqrt(var / n) / std::sqrt(n);
  return s;
}

namespace {

struct EpisodeOutcome {
  std::vector<char> correct;
  std::vector<std::optional<double>> sizes;
};

std::vector<EpisodeOutcome> run_episodes(ModelVariant variant, const ModelParams& params,
                                         const Corpus& corpus, const EpisodeSpec& spec,
                                         const EvalOptions& opts) {
  spec.validate();
  if (opts.top_k == 0) throw SpecError("top_k must be at least 1");
  const EpisodeSampler sampler(corpus, corpus.focal_classes(opts.split));
  std::vector<EpisodeOutcome> out(opts.episodes);

  auto run_one = [&](std::size_t e) {
    Rng rng(derive_seed(opts.seed, e));
    const Episode ep = sampler.sample(spec, rng);
    const auto probs = forward_episode(corpus, ep, variant, params);
    EpisodeOutcome o;
    for (std::size_t q = 0; q < ep.query.size(); ++q) {
      o.correct.push_back(in_top_k(probs[q].data(), ep.query[q].roster_index, opts.top_k));
      o.sizes.push_back(corpus.instances[ep.query[q].instance].size);
    }
    out[e] = std::move(o);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.workers, opts.episodes));
  if (workers == 1) {
    for (std::size_t e = 0; e < opts.episodes; ++e) run_one(e);
    return out;
  }
  // Each episode owns its output slot, so results do not depend on scheduling.
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t e = w; e < opts.episodes; e += workers) run_one(e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  return out;
}

double masked_accuracy(const EpisodeOutcome& o, const std::function<bool(std::size_t)>& keep,
                       std::size_t& count) {
  double hits = 0.0;
  count = 0;
  for (std::size_t q = 0; q < o.correct.size(); ++q) {
    if (!keep(q)) continue;
    ++count;
    hits += o.correct[q] ? 1.0 : 0.0;
  }
  return count ? hits / static_cast<double>(count) : 0.0;
}

EvalReport make_report(ModelVariant variant, const EpisodeSpec& spec, const EvalOptions& opts,
                       std::vector<double> per_episode) {
  EvalReport r;
  r.variant = to_string(variant);
  r.spec = spec;
  r.top_k = opts.top_k;
  r.seed = opts.seed;
  r.per_episode = std::move(per_episode);
  const Summary s = summarize(r.per_episode);
  r.mean = s.mean;
  r.ci95 = s.ci95;
  return r;
}

}  // namespace

EvalReport evaluate(ModelVariant variant, const ModelParams& params, const Corpus& corpus,
                    const EpisodeSpec& spec, const EvalOptions& opts) {
  const auto outcomes = run_episodes(variant, params, corpus, spec, opts);
  std::vector<double> acc;
  acc.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    std::size_t n = 0;
    acc.push_back(masked_accuracy(o, [](std::size_t) { return true; }, n));
  }
  return make_report(variant, spec, opts, std::move(acc));
}

std::vector<EvalReport> noise_sweep(ModelVariant variant, const ModelParams& params,
                                    const Corpus& corpus, const EpisodeSpec& spec,
                                    std::span<const double> p_grid, const EvalOptions& opts) {
  std::vector<EvalReport> out;
  for (double p : p_grid) {
    EpisodeSpec s = spec;
    s.p_noise = p;
    out.push_back(evaluate(variant, params, corpus, s, opts));
  }
  return out;
}

std::vector<StratumResult> strata_eval(ModelVariant variant, const ModelParams& params,
                                       const Corpus& corpus, const EpisodeSpec& spec,
                                       std::span<const SizeBin> bins, const EvalOptions& opts) {
  const auto outcomes = run_episodes(variant, params, corpus, spec, opts);
  std::vector<StratumResult> out;
  for (const SizeBin& bin : bins) {
    StratumResult sr;
    sr.bin = bin;
    std::vector<double> acc;
    for (const auto& o : outcomes) {
      std::size_t n = 0;
      const double a = masked_accuracy(
          o,
          [&](std::size_t q) { return o.sizes[q] && *o.sizes[q] >= bin.lo && *o.sizes[q] < bin.hi; },
          n);
      sr.n_queries += n;
      if (n > 0) acc.push_back(a);
    }
    if (!acc.empty()) sr.report = make_report(variant, spec, opts, std::move(acc));
    out.push_back(std::move(sr));
  }
  return out;
}

}  // namespace cshot
