#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextshot/checkpoint.hpp"
#include "contextshot/config.hpp"
#include "contextshot/corpus.hpp"
#include "contextshot/episodic.hpp"

namespace cshot {

// Loads `corpus_path` when set, otherwise generates from the corpus spec.
Corpus resolve_corpus(const RunConfig& cfg);

// Throws ConfigError when the model input widths disagree with the corpus.
void check_dims(const ModelDims& dims, const Corpus& corpus);

// Every command writes `<command>.config.json` (the resolved config) plus its
// artifacts into cfg.out.

// corpus.jsonl and corpus.jsonl.words.tsv
Corpus cmd_gen(const RunConfig& cfg);

// model.ckpt, model.ckpt.manifest, loss.csv
TrainResult cmd_train(const RunConfig& cfg);

// eval.json; the model comes from cfg.checkpoint and is run as the variant it
// was trained as.
EvalReport cmd_eval(const RunConfig& cfg);

struct SweepRow {
  std::string variant;
  std::size_t ways = 0;
  std::size_t shots = 0;
  double p_noise = 0.0;
  EvalReport report;
};

// sweep.csv. One model is trained per (variant, ways, shots) cell unless
// cfg.checkpoint is set, in which case that model serves every cell.
std::vector<SweepRow> cmd_sweep(const RunConfig& cfg);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AttentionDump {
  std::string focal;
  std::vector<std::pair<std::string, double>> weights;  // descending
};

// CCAM weights of the checkpoint for cfg.attend.focal over its context set.
AttentionDump attend_dump(const Checkpoint& ckpt, const Corpus& corpus, const RunConfig& cfg);
// {focal, weights: [{label, weight}], top: [...], bottom: [...]}
nlohmann::json to_json(const AttentionDump& dump, std::size_t slice);

// attend.json
AttentionDump cmd_attend(const RunConfig& cfg);

// embeddings.tsv: one row per instance of the focal classes in cfg.eval.split,
// label followed by its query-side embedding. Returns the row count.
std::size_t cmd_export(const RunConfig& cfg);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace cshot
