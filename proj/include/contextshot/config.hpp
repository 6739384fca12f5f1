#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextshot/corpus.hpp"
#include "contextshot/episodic.hpp"
#include "contextshot/model.hpp"

namespace cshot {

void to_json(nlohmann::json& j, const ModelDims& d);
void from_json(const nlohmann::json& j, ModelDims& d);

struct EvalConfig {
  std::size_t episodes = 600;
  std::size_t top_k = 1;
  std::size_t workers = 1;
  Split split = Split::Test;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

// Grid for `sweep`: the cartesian product of ways x shots x p_noise for each
// variant. An empty variant list means the run's own variant.
struct SweepConfig {
  std::vector<std::string> variants;
  std::vector<std::size_t> ways{5};
  std::vector<std::size_t> shots{1};
  std::vector<double> p_noise{0.0};

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct AttendConfig {
  std::string focal;
  // Labels to attend over; empty means every vocabulary word admitted by the
  // context source, minus the focal word itself.
  std::vector<std::string> context;
  std::size_t slice = 3;

  friend bool operator==(const AttendConfig&, const AttendConfig&) = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "run";
  ModelVariant variant = ModelVariant::Full;
  // Corpus file to load; when empty the corpus is generated from `corpus`.
  std::string corpus_path;
  std::string checkpoint;
  CorpusSpec corpus;
  EpisodeSpec episode;
  ModelDims model;
  OptimizerConfig optim;
  EvalConfig eval;
  SweepConfig sweep;
  AttendConfig attend;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);
void to_json(nlohmann::json& j, const SweepConfig& c);
void from_json(const nlohmann::json& j, SweepConfig& c);
void to_json(nlohmann::json& j, const AttendConfig& c);
void from_json(const nlohmann::json& j, AttendConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
// Rejects unknown keys at every level; missing keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_config(const std::filesystem::path& path);
// Pretty-printed with sorted keys and a trailing newline.
std::string dump_config(const RunConfig& c);

std::string to_string(Split s);
Split parse_split(const std::string& name);

}  // namespace cshot
