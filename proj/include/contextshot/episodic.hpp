#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextshot/corpus.hpp"
#include "contextshot/model.hpp"

namespace cshot {

struct EpisodeSpec {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;  // per class
  ContextSource source = ContextSource::Union;
  double p_noise = 0.0;

  void validate() const;
  friend bool operator==(const EpisodeSpec&, const EpisodeSpec&) = default;
};

void to_json(nlohmann::json& j, const EpisodeSpec& s);
void from_json(const nlohmann::json& j, EpisodeSpec& s);

// One support or query item: an index into the corpus, the position of its
// class in the episode roster, and its context after source filtering and
// noise injection.
struct EpisodeItem {
  std::size_t instance = 0;
  std::size_t roster_index = 0;
  std::vector<std::string> context;

  friend bool operator==(const EpisodeItem&, const EpisodeItem&) = default;
};

struct Episode {
  std::vector<std::string> roster;
  std::vector<EpisodeItem> support;  // grouped by roster class, `shots` each
  std::vector<EpisodeItem> query;    // grouped by roster class, `queries` each

  friend bool operator==(const Episode&, const Episode&) = default;
};

// Samples episodes from a fixed pool of focal classes.
class EpisodeSampler {
 public:
  EpisodeSampler(const Corpus& corpus, std::vector<std::string> pool);

  // Classes uniformly without replacement, then instances without replacement
  // within each class. Throws SamplingError naming the deficit.
  Episode sample(const EpisodeSpec& spec, Rng& rng) const;
  const std::vector<std::string>& pool() const noexcept { return pool_; }

 private:
  const Corpus* corpus_;
  std::vector<std::string> pool_;
  std::vector<std::vector<std::size_t>> members_;
  ClassPartition partition_;
  std::vector<std::string> noise_vocab_;
};

Episode sample_episode(const Corpus& corpus, std::span<const std::string> pool,
                       const EpisodeSpec& spec, Rng& rng);

// Per-query logits (negative distances to the roster prototypes) recorded on
// a tape, plus true roster indices.
struct EpisodeGraph {
  std::vector<Var> logits;
  std::vector<std::size_t> labels;
};

EpisodeGraph build_episode_graph(Tape& tape, const Corpus& corpus, const Episode& episode,
                                 ModelVariant variant, const ModelParams& params);

// Class distributions for every query, in episode query order.
std::vector<Tensor> forward_episode(const Corpus& corpus, const Episode& episode,
                                    ModelVariant variant, const ModelParams& params);

// Query-side embedding of one instance with the given (already filtered)
// context: f(x), or its fusion with the averaged context for context variants.
Tensor embed_query(const Corpus& corpus, std::size_t instance, std::span<const std::string> context,
                   ModelVariant variant, const ModelParams& params);

// Mean negative log-likelihood of the true classes via fused log-softmax.
Var episode_loss(std::span<const Var> logits, std::span<const std::size_t> labels);
double episode_loss(std::span<const Tensor> logits, std::span<const std::size_t> labels);

// Whether `label` ranks within the top k of `probs`; ties go to the lower index.
bool in_top_k(std::span<const double> probs, std::size_t label, std::size_t k);

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t episodes = 2000;
  // Episodes between 10x decays; 0 splits the run into thirds.
  std::size_t decay_every = 0;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

void to_json(nlohmann::json& j, const OptimizerConfig& s);
void from_json(const nlohmann::json& j, OptimizerConfig& s);

double learning_rate_at(std::size_t episode, const OptimizerConfig& cfg);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, const OptimizerConfig& cfg);
  void step(double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> losses;
  std::vector<double> learning_rates;
};

struct TrainOptions {
  ModelVariant variant = ModelVariant::Full;
  ModelDims dims;
  OptimizerConfig optim;
  EpisodeSpec episode;
  std::uint64_t seed = 1;
};

// Episodes are drawn from the corpus train classes. Throws TrainingError on a
// non-finite loss.
TrainResult train(const Corpus& corpus, const TrainOptions& opts);
TrainResult train(const Corpus& corpus, const TrainOptions& opts, ModelParams initial);

struct EvalOptions {
  std::size_t episodes = 600;
  std::size_t top_k = 1;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  Split split = Split::Test;
};

struct EvalReport {
  std::string variant;
  EpisodeSpec spec;
  std::size_t top_k = 1;
  std::uint64_t seed = 0;
  std::vector<double> per_episode;
  double mean = 0.0;
  double ci95 = 0.0;

  std::size_t n_episodes() const noexcept { return per_episode.size(); }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

struct Summary {
  double mean = 0.0;
  double ci95 = 0.0;
};
// Mean and 1.96 * sigma / sqrt(n) with the population standard deviation.
Summary summarize(std::span<const double> per_episode);

EvalReport evaluate(ModelVariant variant, const ModelParams& params, const Corpus& corpus,
                    const EpisodeSpec& spec, const EvalOptions& opts);

// One report per grid point; every point reuses the same episode seeds.
std::vector<EvalReport> noise_sweep(ModelVariant variant, const ModelParams& params,
                                    const Corpus& corpus, const EpisodeSpec& spec,
                                    std::span<const double> p_grid, const EvalOptions& opts);

struct SizeBin {
  double lo = 0.0;
  double hi = 0.0;  // half-open [lo, hi)
};

struct StratumResult {
  SizeBin bin;
  std::size_t n_queries = 0;
  // Absent when no query fell into the bin.
  std::optional<EvalReport> report;
};

// Queries are scored only inside the bin that contains their size; episodes
// with no query in a bin do not contribute to it.
std::vector<StratumResult> strata_eval(ModelVariant variant, const ModelParams& params,
                                       const Corpus& corpus, const EpisodeSpec& spec,
                                       std::span<const SizeBin> bins, const EvalOptions& opts);

}  // namespace cshot
