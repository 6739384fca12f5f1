#include "contextshot/commands.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "contextshot/error.hpp"

namespace cshot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

fs::path prepare_out(const RunConfig& cfg, const char* command) {
  const fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / (std::string(command) + ".config.json"), dump_config(cfg));
  return dir;
}

Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint given (use --checkpoint or the config key)");
  return load_checkpoint(cfg.checkpoint);
}

EvalOptions eval_options(const RunConfig& cfg) {
  return EvalOptions{cfg.eval.episodes, cfg.eval.top_k, cfg.seed, cfg.eval.workers, cfg.eval.split};
}

TrainOptions train_options(const RunConfig& cfg, ModelVariant variant, const EpisodeSpec& spec) {
  TrainOptions o;
  o.variant = variant;
  o.dims = cfg.model;
  o.optim = cfg.optim;
  o.episode = spec;
  o.seed = cfg.seed;
  return o;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Corpus resolve_corpus(const RunConfig& cfg) {
  return cfg.corpus_path.empty() ? generate_corpus(cfg.corpus) : load_corpus(cfg.corpus_path);
}

void check_dims(const ModelDims& dims, const Corpus& corpus) {
  if (!corpus.instances.empty() && corpus.instances.front().features.size() != dims.d_f) {
    throw ConfigError("model.d_f is " + std::to_string(dims.d_f) + " but corpus features have " +
                      std::to_string(corpus.instances.front().features.size()) + " dimensions");
  }
  if (corpus.words.dim() != dims.d_w) {
    throw ConfigError("model.d_w is " + std::to_string(dims.d_w) + " but word vectors have " +
                      std::to_string(corpus.words.dim()) + " dimensions");
  }
}

Corpus cmd_gen(const RunConfig& cfg) {
  const fs::path dir = prepare_out(cfg, "gen");
  Corpus corpus = generate_corpus(cfg.corpus);
  save_corpus(corpus, dir / "corpus.jsonl");
  return corpus;
}

TrainResult cmd_train(const RunConfig& cfg) {
  const Corpus corpus = resolve_corpus(cfg);
  check_dims(cfg.model, corpus);
  const fs::path dir = prepare_out(cfg, "train");
  TrainResult result = train(corpus, train_options(cfg, cfg.variant, cfg.episode));

  Checkpoint ckpt{cfg, result.params};
  save_checkpoint(ckpt, dir / "model.ckpt");
  write_text(dir / "model.ckpt.manifest", checkpoint_manifest(ckpt));
  std::ostringstream csv;
  csv << "episode,learning_rate,loss\n";
  for (std::size_t e = 0; e < result.losses.size(); ++e) {
    csv << e << ',' << format_double(result.learning_rates[e]) << ',' << format_double(result.losses[e])
        << '\n';
  }
  write_text(dir / "loss.csv", csv.str());
  return result;
}

EvalReport cmd_eval(const RunConfig& cfg) {
  const Checkpoint ckpt = require_checkpoint(cfg);
  const Corpus corpus = resolve_corpus(cfg);
  check_dims(ckpt.params.dims, corpus);
  const fs::path dir = prepare_out(cfg, "eval");
  EvalReport report = evaluate(ckpt.config.variant, ckpt.params, corpus, cfg.episode, eval_options(cfg));
  write_text(dir / "eval.json", json(report).dump(2) + "\n");
  return report;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg) {
  const Corpus corpus = resolve_corpus(cfg);
  std::optional<Checkpoint> ckpt;
  std::vector<ModelVariant> variants;
  if (!cfg.checkpoint.empty()) {
    if (!cfg.sweep.variants.empty()) {
      throw ConfigError("sweep.variants cannot be combined with a checkpoint");
    }
    ckpt = load_checkpoint(cfg.checkpoint);
    check_dims(ckpt->params.dims, corpus);
    variants.push_back(ckpt->config.variant);
  } else {
    check_dims(cfg.model, corpus);
    if (cfg.sweep.variants.empty()) variants.push_back(cfg.variant);
    for (const auto& name : cfg.sweep.variants) variants.push_back(parse_variant(name));
  }
  if (cfg.sweep.ways.empty() || cfg.sweep.shots.empty() || cfg.sweep.p_noise.empty()) {
    throw ConfigError("sweep grid axes must be non-empty");
  }
  const fs::path dir = prepare_out(cfg, "sweep");

  std::vector<SweepRow> rows;
  for (ModelVariant v : variants) {
    for (std::size_t ways : cfg.sweep.ways) {
      for (std::size_t shots : cfg.sweep.shots) {
        EpisodeSpec spec = cfg.episode;
        spec.ways = ways;
        spec.shots = shots;
        spec.p_noise = 0.0;
        const ModelParams params =
            ckpt ? ckpt->params : train(corpus, train_options(cfg, v, spec)).params;
        for (double p : cfg.sweep.p_noise) {
          spec.p_noise = p;
          rows.push_back({to_string(v), ways, shots, p,
                          evaluate(v, params, corpus, spec, eval_options(cfg))});
        }
      }
    }
  }
  write_text(dir / "sweep.csv", sweep_csv(rows));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "variant,ways,shots,p_noise,top_k,n_episodes,mean,ci95\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.ways << ',' << r.shots << ',' << format_double(r.p_noise) << ','
       << r.report.top_k << ',' << r.report.n_episodes() << ',' << format_double(r.report.mean) << ','
       << format_double(r.report.ci95) << '\n';
  }
  return os.str();
}

AttentionDump attend_dump(const Checkpoint& ckpt, const Corpus& corpus, const RunConfig& cfg) {
  const std::string& focal = cfg.attend.focal;
  if (focal.empty()) throw ConfigError("attend needs a focal word (attend.focal or --focal)");
  const Tensor w = corpus.words.vector(focal);
  std::vector<std::string> labels = cfg.attend.context;
  if (labels.empty()) {
    // The probe feeds every admissible word, as in a whole-vocabulary query.
    const auto part = corpus.partition();
    for (const auto& word : corpus.words.vocabulary()) {
      if (word == focal) continue;
      const bool in_train = part.train.contains(word);
      const bool in_test = part.test.contains(word);
      const bool keep = cfg.episode.source == ContextSource::Train  ? in_train
                        : cfg.episode.source == ContextSource::Test ? in_test
                                                                    : in_train || in_test;
      if (keep) labels.push_back(word);
    }
  }
  const AttentionResult a = ccam_attend(ContextSet::from_labels(labels, corpus.words), w, ckpt.params.ccam);
  return AttentionDump{focal, a.ranked};
}

json to_json(const AttentionDump& dump, std::size_t slice) {
  auto entries = [](auto first, auto last) {
    json arr = json::array();
    for (auto it = first; it != last; ++it) arr.push_back({{"label", it->first}, {"weight", it->second}});
    return arr;
  };
  const std::size_t k = std::min(slice, dump.weights.size());
  return json{{"focal", dump.focal},
              {"weights", entries(dump.weights.begin(), dump.weights.end())},
              {"top", entries(dump.weights.begin(), dump.weights.begin() + k)},
              {"bottom", entries(dump.weights.end() - k, dump.weights.end())}};
}

AttentionDump cmd_attend(const RunConfig& cfg) {
  const Checkpoint ckpt = require_checkpoint(cfg);
  const Corpus corpus = resolve_corpus(cfg);
  check_dims(ckpt.params.dims, corpus);
  const fs::path dir = prepare_out(cfg, "attend");
  AttentionDump dump = attend_dump(ckpt, corpus, cfg);
  write_text(dir / "attend.json", to_json(dump, cfg.attend.slice).dump(2) + "\n");
  return dump;
}

std::size_t cmd_export(const RunConfig& cfg) {
  const Checkpoint ckpt = require_checkpoint(cfg);
  const Corpus corpus = resolve_corpus(cfg);
  check_dims(ckpt.params.dims, corpus);
  const fs::path dir = prepare_out(cfg, "export");
  const auto part = corpus.partition();
  const auto focal = corpus.focal_classes(cfg.eval.split);
  const std::unordered_set<std::string> keep(focal.begin(), focal.end());

  std::ostringstream os;
  os << "label";
  for (std::size_t d = 0; d < ckpt.params.dims.resolved().d_x; ++d) os << "\te" << d;
  os << '\n';
  std::size_t rows = 0;
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const auto& inst = corpus.instances[i];
    if (!keep.contains(inst.label)) continue;
    const auto ctx = select_context(inst.context, cfg.episode.source, part);
    const Tensor e = embed_query(corpus, i, ctx, ckpt.config.variant, ckpt.params);
    os << inst.label;
    for (double v : e.data()) os << '\t' << format_double(v);
    os << '\n';
    ++rows;
  }
  write_text(dir / "embeddings.tsv", os.str());
  return rows;
}

}  // namespace cshot
