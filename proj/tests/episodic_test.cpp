#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "contextshot/error.hpp"
#include "support.hpp"

using namespace cshot;
using namespace cshot::testing;

namespace {

// Hand-built corpus: focal classes c0..c{n-1}, `per_class` instances each,
// plus two context-only words in the train vocabulary.
Corpus toy_corpus(std::size_t n, std::size_t per_class, std::size_t test_from, Rng& rng) {
  Corpus c;
  c.words = WordTable(2);
  for (std::size_t k = 0; k < n; ++k) {
    const std::string name = "c" + std::to_string(k);
    const double angle = 2.0 * 3.141592653589793 * static_cast<double>(k) / static_cast<double>(n);
    const double center[] = {2.0 * std::cos(angle), 2.0 * std::sin(angle)};
    c.words.add(name, center);
    c.classes.push_back(name);
    (k < test_from ? c.train_classes : c.test_classes).push_back(name);
    for (std::size_t i = 0; i < per_class; ++i) {
      SceneInstance inst;
      inst.label = name;
      inst.features = {center[0] + 0.01 * standard_normal(rng), center[1] + 0.01 * standard_normal(rng)};
      inst.context = {"ctx_a", "ctx_b"};
      inst.size = 100.0 * static_cast<double>(1 + i);
      c.instances.push_back(inst);
    }
  }
  const double a[] = {1.0, 0.5}, b[] = {-0.5, 1.0};
  c.words.add("ctx_a", a);
  c.words.add("ctx_b", b);
  c.train_classes.push_back("ctx_a");
  c.train_classes.push_back("ctx_b");
  return c;
}

// Encoder f(x) = scale * tanh(x) on a 2-d space.
ModelParams tanh_params(double scale, bool squared = true) {
  ModelDims d;
  d.d_f = d.d_x = d.d_w = d.d_hidden = 2;
  d.d_z = 3;
  d.squared_distance = squared;
  ModelParams p = ModelParams::init(d, 1);
  p.encoder.w1.value = Tensor::matrix({{1, 0}, {0, 1}});
  p.encoder.b1.value.fill(0.0);
  p.encoder.w2.value = Tensor::matrix({{scale, 0}, {0, scale}});
  p.encoder.b2.value.fill(0.0);
  return p;
}

Episode manual_episode(const std::vector<std::string>& roster, const std::vector<std::size_t>& support,
                       std::size_t query, std::size_t query_label) {
  Episode ep;
  ep.roster = roster;
  for (std::size_t r = 0; r < support.size(); ++r) ep.support.push_back({support[r], r, {}});
  ep.query.push_back({query, query_label, {}});
  return ep;
}

Corpus small_generated(std::uint64_t seed = 5) {
  CorpusSpec s = tiny_corpus_spec(seed);
  s.n_classes = 24;
  s.instances_per_class = 20;
  s.sim_threshold = 0.95;
  return generate_corpus(s);
}

}  // namespace

TEST(Sampler, CountsAndDisjointness) {
  Rng rng(1);
  const Corpus c = toy_corpus(8, 20, 8, rng);
  EpisodeSpec spec;
  spec.ways = 5;
  spec.shots = 1;
  spec.queries = 15;
  Rng r(2);
  const Episode ep = sample_episode(c, c.classes, spec, r);
  EXPECT_EQ(ep.roster.size(), 5u);
  EXPECT_EQ(ep.support.size(), 5u);
  EXPECT_EQ(ep.query.size(), 75u);
  EXPECT_EQ(std::set<std::string>(ep.roster.begin(), ep.roster.end()).size(), 5u);
  std::set<std::size_t> seen;
  std::vector<std::size_t> per_class_q(5, 0);
  for (const auto* items : {&ep.support, &ep.query}) {
    for (const auto& it : *items) {
      EXPECT_TRUE(seen.insert(it.instance).second);
      EXPECT_EQ(c.instances[it.instance].label, ep.roster[it.roster_index]);
    }
  }
  for (const auto& it : ep.query) ++per_class_q[it.roster_index];
  for (std::size_t n : per_class_q) EXPECT_EQ(n, 15u);
}

TEST(Sampler, SameSeedSameEpisode) {
  const Corpus c = small_generated();
  const auto pool = c.focal_classes(Split::Train);
  EpisodeSpec spec;
  spec.ways = 3;
  spec.queries = 4;
  spec.p_noise = 0.3;
  Rng a(9), b(9);
  EXPECT_EQ(sample_episode(c, pool, spec, a), sample_episode(c, pool, spec, b));
}

TEST(Sampler, NoiseDoesNotChangeClassOrInstanceDraws) {
  const Corpus c = small_generated();
  const auto pool = c.focal_classes(Split::Train);
  EpisodeSpec clean, noisy;
  clean.ways = noisy.ways = 3;
  clean.queries = noisy.queries = 4;
  noisy.p_noise = 1.0;
  Rng a(4), b(4);
  const Episode e1 = sample_episode(c, pool, clean, a), e2 = sample_episode(c, pool, noisy, b);
  EXPECT_EQ(e1.roster, e2.roster);
  for (std::size_t i = 0; i < e1.query.size(); ++i) EXPECT_EQ(e1.query[i].instance, e2.query[i].instance);
}

TEST(Sampler, ClassFrequencyIsUniform) {
  Rng rng(3);
  const Corpus c = toy_corpus(12, 6, 12, rng);
  EpisodeSpec spec;
  spec.ways = 5;
  spec.queries = 2;
  const EpisodeSampler sampler(c, c.classes);
  std::map<std::string, double> counts;
  const int n = 10000;
  Rng r(10);
  for (int i = 0; i < n; ++i)
    for (const auto& cls : sampler.sample(spec, r).roster) counts[cls] += 1.0;
  const double p = 5.0 / 12.0;
  const double mu = n * p, sigma = std::sqrt(n * p * (1.0 - p));
  ASSERT_EQ(counts.size(), 12u);
  for (const auto& [cls, k] : counts) EXPECT_NEAR(k, mu, 3.0 * sigma) << cls;
}

TEST(Sampler, DeficitIsSamplingError) {
  Rng rng(3);
  Corpus c = toy_corpus(6, 5, 6, rng);
  EpisodeSpec spec;
  spec.ways = 5;
  spec.shots = 1;
  spec.queries = 15;
  Rng r(1);
  try {
    sample_episode(c, c.classes, spec, r);
    FAIL() << "expected SamplingError";
  } catch (const SamplingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("at least 16"), std::string::npos) << msg;
    EXPECT_NE(msg.find("only 0 of 6"), std::string::npos) << msg;
  }
  spec.queries = 4;
  spec.ways = 7;
  EXPECT_THROW(sample_episode(c, c.classes, spec, r), SamplingError);
}

TEST(EpisodeSpec, Validation) {
  EpisodeSpec s;
  s.ways = 1;
  EXPECT_THROW(s.validate(), SpecError);
  s = {};
  s.shots = 0;
  EXPECT_THROW(s.validate(), SpecError);
  s = {};
  s.queries = 0;
  EXPECT_THROW(s.validate(), SpecError);
  s = {};
  s.p_noise = 1.5;
  EXPECT_THROW(s.validate(), SpecError);
  EXPECT_THROW(nlohmann::json({{"ways", 5}, {"bogus", 1}}).get<EpisodeSpec>(), ConfigError);
}

TEST(Forward, EquidistantQueryIsEven) {
  Rng rng(1);
  Corpus c = toy_corpus(2, 1, 2, rng);
  c.instances[0].features = {1.5, 0.0};
  c.instances[1].features = {-1.5, 0.0};
  SceneInstance q = c.instances[0];
  q.features = {0.0, 0.7};
  c.instances.push_back(q);
  const Episode ep = manual_episode({"c0", "c1"}, {0, 1}, 2, 0);
  const auto probs = forward_episode(c, ep, ModelVariant::ProtoNet, tanh_params(1.0));
  ASSERT_EQ(probs.size(), 1u);
  EXPECT_EQ(probs[0], Tensor::vector({0.5, 0.5}));
}

TEST(Forward, QueryAtPrototypeDominates) {
  Rng rng(1);
  Corpus c = toy_corpus(3, 1, 3, rng);
  c.instances[0].features = {3.0, 0.0};
  c.instances[1].features = {-3.0, 0.0};
  c.instances[2].features = {0.0, 3.0};
  c.instances.push_back(c.instances[0]);
  const ModelParams p = tanh_params(10.0, false);
  const Episode ep = manual_episode({"c0", "c1", "c2"}, {0, 1, 2}, 3, 0);
  const auto probs = forward_episode(c, ep, ModelVariant::ProtoNet, p);
  // Direct evaluation: f(x) = 10 tanh(x), logits are negative Euclidean distances.
  const double t = 10.0 * std::tanh(3.0);
  const double d1 = 2.0 * t, d2 = std::sqrt(2.0) * t;
  ASSERT_GE(d2, 10.0);
  const double expect = 1.0 / (1.0 + std::exp(-d1) + std::exp(-d2));
  EXPECT_NEAR(probs[0][0], expect, 1e-12);
  EXPECT_GT(probs[0][0], 0.99);
}

TEST(Forward, DistributionsSumToOne) {
  const Corpus c = small_generated();
  const auto pool = c.focal_classes(Split::Train);
  EpisodeSpec spec;
  spec.ways = 4;
  spec.shots = 2;
  spec.queries = 5;
  for (ModelVariant v : all_variants()) {
    const ModelParams p = ModelParams::init(tiny_dims(), 3);
    Rng r(5);
    for (int e = 0; e < 5; ++e) {
      for (const Tensor& probs : forward_episode(c, sample_episode(c, pool, spec, r), v, p)) {
        double s = 0.0;
        for (double x : probs.data()) s += x;
        ASSERT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Forward, MatchesReferenceLoss) {
  const Corpus c = small_generated();
  const auto pool = c.focal_classes(Split::Train);
  EpisodeSpec spec;
  spec.ways = 3;
  spec.shots = 2;
  spec.queries = 3;
  Rng r(6);
  for (ModelVariant v : all_variants()) {
    for (bool squared : {true, false}) {
      ModelDims d = tiny_dims();
      d.squared_distance = squared;
      const ModelParams p = ModelParams::init(d, 11);
      const Episode ep = sample_episode(c, pool, spec, r);
      Tape t;
      const auto g = build_episode_graph(t, c, ep, v, p);
      const double lib = episode_loss(g.logits, g.labels).value().item();
      const double ref = static_cast<double>(reference_episode_loss(c, ep, v, p));
      EXPECT_NEAR(lib, ref, 1e-10 * std::max(1.0, std::abs(ref))) << to_string(v);
    }
  }
}

TEST(Forward, VariantIsolation) {
  const Corpus c = small_generated();
  const auto pool = c.focal_classes(Split::Train);
  EpisodeSpec spec;
  spec.ways = 3;
  spec.shots = 2;
  spec.queries = 3;
  Rng r(7);
  const Episode ep = sample_episode(c, pool, spec, r);
  Episode perturbed = ep;
  for (auto* items : {&perturbed.support, &perturbed.query})
    for (auto& it : *items) it.context = {c.train_classes[0], c.train_classes[1]};
  const ModelParams p = ModelParams::init(tiny_dims(), 2);
  for (ModelVariant v : {ModelVariant::ProtoNet, ModelVariant::AM3Proto}) {
    EXPECT_EQ(forward_episode(c, ep, v, p), forward_episode(c, perturbed, v, p)) << to_string(v);
  }
  ModelParams q = p;
  for (Parameter* x : q.refine.parameters()) x->value.fill(0.37);
  for (ModelVariant v : {ModelVariant::ProtoCavg, ModelVariant::ProtoCCAM}) {
    EXPECT_EQ(forward_episode(c, ep, v, p), forward_episode(c, ep, v, q)) << to_string(v);
  }
  EXPECT_NE(forward_episode(c, ep, ModelVariant::ProtoCavg, p),
            forward_episode(c, perturbed, ModelVariant::ProtoCavg, p));
}

TEST(Forward, EmptyContextFallsBackToVisual) {
  const Corpus c = small_generated();
  const ModelParams p = ModelParams::init(tiny_dims(), 2);
  const std::vector<std::string> none;
  EXPECT_EQ(embed_query(c, 0, none, ModelVariant::Full, p),
            embed_query(c, 0, none, ModelVariant::ProtoNet, p));
  EXPECT_EQ(embed_query(c, 0, none, ModelVariant::ProtoNet, p),
            encode_visual(Tensor::vector(c.instances[0].features), p.encoder));
  EXPECT_THROW(embed_query(c, c.instances.size(), none, ModelVariant::Full, p), LookupError);
}

TEST(Forward, UnknownContextLabelIsLookupError) {
  const Corpus c = small_generated();
  const auto pool = c.focal_classes(Split::Train);
  EpisodeSpec spec;
  spec.ways = 2;
  spec.queries = 1;
  Rng r(1);
  Episode ep = sample_episode(c, pool, spec, r);
  ep.query[0].context = {"no-such-label"};
  EXPECT_THROW(forward_episode(c, ep, ModelVariant::ProtoCavg, ModelParams::init(tiny_dims(), 1)),
               LookupError);
}

TEST(Loss, ClosedFormExamples) {
  const std::vector<Tensor> perfect = {Tensor::vector({0, -800}), Tensor::vector({-800, 0})};
  const std::vector<std::size_t> labels = {0, 1};
  EXPECT_NEAR(episode_loss(perfect, labels), 0.0, 1e-300);

  const std::vector<Tensor> uniform = {Tensor({5}, 0.0)};
  const std::vector<std::size_t> l2 = {3};
  EXPECT_NEAR(episode_loss(uniform, l2), std::log(5.0), 1e-15);
  EXPECT_NEAR(episode_loss(uniform, l2), 1.6094, 1e-4);

  const std::vector<Tensor> mixed = {Tensor::vector({std::log(0.25), std::log(0.75)}),
                                     Tensor::vector({std::log(0.5), std::log(0.5)})};
  EXPECT_NEAR(episode_loss(mixed, labels), (std::log(4.0) + std::log(2.0)) / 2.0, 1e-15);
  EXPECT_NEAR(episode_loss(mixed, labels), 1.0397, 1e-4);
}

TEST(Loss, ExtremeLogitsStayFinite) {
  const std::vector<Tensor> l = {Tensor::vector({1e6, -1e6})};
  const std::vector<std::size_t> wrong = {1};
  EXPECT_NEAR(episode_loss(l, wrong), 2e6, 1e-6);
  const std::vector<std::size_t> none;
  EXPECT_THROW(episode_loss(std::span<const Tensor>{}, none), ContractError);
  const std::vector<std::size_t> bad = {2};
  EXPECT_THROW(episode_loss(l, bad), DimensionError);
}

TEST(TopK, TiesGoToLowerIndex) {
  const double p[] = {0.25, 0.25, 0.5};
  EXPECT_TRUE(in_top_k(p, 2, 1));
  EXPECT_FALSE(in_top_k(p, 0, 1));
  EXPECT_TRUE(in_top_k(p, 0, 2));
  EXPECT_FALSE(in_top_k(p, 1, 2));
  EXPECT_TRUE(in_top_k(p, 1, 3));
}

TEST(Schedule, DecaysAtThirds) {
  OptimizerConfig cfg;
  cfg.episodes = 30000;
  EXPECT_EQ(learning_rate_at(0, cfg), 1e-3);
  EXPECT_EQ(learning_rate_at(9999, cfg), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(10000, cfg), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(19999, cfg), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(20000, cfg), 1e-5);
  EXPECT_DOUBLE_EQ(learning_rate_at(29999, cfg), 1e-5);
  cfg.decay_every = 100;
  EXPECT_DOUBLE_EQ(learning_rate_at(250, cfg), 1e-5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("p", Tensor::vector({1.0, -2.0, 0.5}));
  p.grad = Tensor::vector({0.3, -4.0, 0.0});
  Adam adam({&p}, OptimizerConfig{});
  adam.step(0.1);
  // Bias-corrected first step: -lr * g / (|g| + eps).
  EXPECT_NEAR(p.value[0], 1.0 - 0.1 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.value[2], 0.5);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Train, ZeroEpisodesLeavesParamsUnchanged) {
  const Corpus c = small_generated();
  TrainOptions o;
  o.dims = tiny_dims();
  o.optim.episodes = 0;
  o.episode.ways = 3;
  o.episode.queries = 3;
  const auto r = train(c, o);
  EXPECT_TRUE(r.losses.empty());
  const ModelParams init = ModelParams::init(o.dims, derive_seed(o.seed, 0));
  const auto a = r.params.parameters();
  const auto b = init.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
}

TEST(Train, NonFiniteLossIsReported) {
  const Corpus c = small_generated();
  TrainOptions o;
  o.dims = tiny_dims();
  o.optim.episodes = 3;
  o.episode.ways = 3;
  o.episode.queries = 3;
  ModelParams bad = ModelParams::init(o.dims, 1);
  bad.encoder.b2.value[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(c, o, bad);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("episode 0"), std::string::npos) << e.what();
  }
}

TEST(Train, FullVariantHalvesItsLoss) {
  const Corpus c = generate_corpus(CorpusSpec{});
  TrainOptions o;
  o.variant = ModelVariant::Full;
  o.optim.episodes = 500;
  o.optim.decay_every = 10000;
  o.seed = 3;
  const auto r = train(c, o);
  ASSERT_EQ(r.losses.size(), 500u);
  const double head = std::accumulate(r.losses.begin(), r.losses.begin() + 20, 0.0) / 20.0;
  const double tail = std::accumulate(r.losses.end() - 50, r.losses.end(), 0.0) / 50.0;
  EXPECT_LE(tail, 0.5 * head) << "head " << head << " tail " << tail;
}

TEST(Train, IsDeterministic) {
  const Corpus c = small_generated();
  TrainOptions o;
  o.variant = ModelVariant::Full;
  o.dims = tiny_dims();
  o.optim.episodes = 30;
  o.episode.ways = 3;
  o.episode.queries = 3;
  const auto a = train(c, o), b = train(c, o);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.params.norm(), b.params.norm());
}

TEST(Summary, ConfidenceInterval) {
  const std::vector<double> halves(100, 0.5);
  const Summary s = summarize(halves);
  EXPECT_EQ(s.mean, 0.5);
  EXPECT_EQ(s.ci95, 0.0);
  std::vector<double> spread;
  for (int i = 0; i < 4000; ++i) spread.push_back(i % 2 ? 0.6 : 0.4);
  const Summary t = summarize(spread);
  EXPECT_NEAR(t.mean, 0.5, 1e-12);
  EXPECT_NEAR(t.ci95, 1.96 * 0.1 / std::sqrt(4000.0), 1e-12);
  EXPECT_NEAR(t.ci95, 0.0031, 5e-5);
}

TEST(Evaluate, OracleParamsOnSeparableCorpus) {
  Rng rng(4);
  const Corpus c = toy_corpus(10, 12, 4, rng);
  EpisodeSpec spec;
  spec.ways = 5;
  spec.queries = 5;
  EvalOptions opts;
  opts.episodes = 50;
  const auto r = evaluate(ModelVariant::ProtoNet, tanh_params(5.0), c, spec, opts);
  EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(r.ci95, 0.0);
  EXPECT_EQ(r.n_episodes(), 50u);
  opts.top_k = 0;
  EXPECT_THROW(evaluate(ModelVariant::ProtoNet, tanh_params(5.0), c, spec, opts), SpecError);
}

TEST(Evaluate, WorkersDoNotChangeResults) {
  const Corpus c = small_generated();
  EpisodeSpec spec;
  spec.ways = 3;
  spec.queries = 4;
  EvalOptions one;
  one.episodes = 40;
  one.split = Split::Train;
  EvalOptions many = one;
  many.workers = 4;
  const ModelParams p = ModelParams::init(tiny_dims(), 8);
  EXPECT_EQ(evaluate(ModelVariant::Full, p, c, spec, one), evaluate(ModelVariant::Full, p, c, spec, many));
}

TEST(Evaluate, ReportJsonRoundTrip) {
  EvalReport r;
  r.variant = "Full";
  r.per_episode = {0.1, 0.7};
  r.mean = 0.4;
  r.ci95 = 0.2;
  r.seed = 17;
  EXPECT_EQ(nlohmann::json(r).get<EvalReport>(), r);
}

TEST(NoiseSweep, ZeroPointEqualsEvaluateAndProtoNetIsFlat) {
  const Corpus c = small_generated();
  EpisodeSpec spec;
  spec.ways = 3;
  spec.queries = 4;
  EvalOptions opts;
  opts.episodes = 30;
  opts.split = Split::Train;
  const ModelParams p = ModelParams::init(tiny_dims(), 8);
  const std::vector<double> grid = {0.0, 0.5, 1.0};
  const auto full = noise_sweep(ModelVariant::Full, p, c, spec, grid, opts);
  ASSERT_EQ(full.size(), 3u);
  EXPECT_EQ(full[0], evaluate(ModelVariant::Full, p, c, spec, opts));
  EXPECT_EQ(full[2].spec.p_noise, 1.0);
  const auto proto = noise_sweep(ModelVariant::ProtoNet, p, c, spec, grid, opts);
  EXPECT_EQ(proto[0].per_episode, proto[1].per_episode);
  EXPECT_EQ(proto[0].per_episode, proto[2].per_episode);
}

TEST(Strata, SingleBinAndPartition) {
  const Corpus c = small_generated();
  EpisodeSpec spec;
  spec.ways = 3;
  spec.queries = 4;
  EvalOptions opts;
  opts.episodes = 30;
  opts.split = Split::Train;
  const ModelParams p = ModelParams::init(tiny_dims(), 8);
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<SizeBin> all = {{0.0, inf}};
  const auto one = strata_eval(ModelVariant::Full, p, c, spec, all, opts);
  ASSERT_TRUE(one[0].report);
  EXPECT_EQ(*one[0].report, evaluate(ModelVariant::Full, p, c, spec, opts));
  EXPECT_EQ(one[0].n_queries, 30u * 12u);

  const std::vector<SizeBin> bins = {{0, 500}, {500, 4000}, {4000, inf}, {-2, -1}};
  const auto parts = strata_eval(ModelVariant::Full, p, c, spec, bins, opts);
  std::size_t total = 0;
  for (const auto& s : parts) total += s.n_queries;
  EXPECT_EQ(total, 30u * 12u);
  EXPECT_FALSE(parts[3].report.has_value());
  EXPECT_EQ(parts[3].n_queries, 0u);
}

TEST(Gradients, EveryVariantMatchesFiniteDifferences) {
  const Corpus c = generate_corpus(tiny_corpus_spec());
  const auto pool = c.focal_classes(Split::Train);
  EpisodeSpec spec;
  spec.ways = 3;
  spec.shots = 2;
  spec.queries = 2;
  Rng r(12);
  for (ModelVariant v : all_variants()) {
    ModelParams p = ModelParams::init(tiny_dims(), 21);
    const Episode ep = sample_episode(c, pool, spec, r);
    const auto res = check_episode_gradients(c, ep, v, p);
    EXPECT_LT(res.max_rel_error, 1e-4) << to_string(v) << " " << res.worst_param;
  }
}
