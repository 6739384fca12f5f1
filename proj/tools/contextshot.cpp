// contextshot: generate corpora, train and evaluate context-aware few-shot
// models, sweep settings and probe attention.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "contextshot/commands.hpp"
#include "contextshot/error.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> top_k;
  std::optional<std::string> context_source;
  std::optional<double> p_noise;
  std::optional<std::string> checkpoint;
  std::optional<std::string> corpus;
  std::optional<std::size_t> workers;
  std::optional<std::string> focal;
  std::vector<std::string> context;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--seed", o.seed, "Run seed (overrides config)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--variant", o.variant, "protonet, am3-proto, proto-cavg, proto-ccam, proto-cavg-w2v or full");
  cmd->add_option("--episodes", o.episodes, "Training episodes for train, evaluation episodes otherwise");
  cmd->add_option("--top-k", o.top_k, "Top-k accuracy");
  cmd->add_option("--context-source", o.context_source, "cs, ct or union");
  cmd->add_option("--p-noise", o.p_noise, "Context noise probability");
  cmd->add_option("--corpus", o.corpus, "Corpus file (default: generate from config)");
  cmd->add_option("--workers", o.workers, "Evaluation worker threads");
}

cshot::RunConfig resolve(const Overrides& o, const std::string& command) {
  cshot::RunConfig cfg = o.config.empty() ? cshot::RunConfig{} : cshot::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (o.variant) cfg.variant = cshot::parse_variant(*o.variant);
  if (o.episodes) (command == "train" ? cfg.optim.episodes : cfg.eval.episodes) = *o.episodes;
  if (o.top_k) cfg.eval.top_k = *o.top_k;
  if (o.context_source) cfg.episode.source = cshot::parse_context_source(*o.context_source);
  if (o.p_noise) cfg.episode.p_noise = *o.p_noise;
  if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
  if (o.corpus) cfg.corpus_path = *o.corpus;
  if (o.workers) cfg.eval.workers = *o.workers;
  if (o.focal) cfg.attend.focal = *o.focal;
  if (!o.context.empty()) cfg.attend.context = o.context;
  return cfg;
}

int fail(const std::string& category, const std::string& message) {
  std::string line = message;
  for (char& c : line)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error: " << category << ": " << line << '\n';
  return category == "usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware few-shot learning toolkit"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  auto* train = app.add_subcommand("train", "Train a model variant");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* sweep = app.add_subcommand("sweep", "Evaluate over a ways/shots/noise grid");
  auto* attend = app.add_subcommand("attend", "Dump CCAM weights for a focal word");
  auto* exp = app.add_subcommand("export", "Export instance embeddings as TSV");
  for (auto* cmd : {gen, train, eval, sweep, attend, exp}) add_common(cmd, o);
  for (auto* cmd : {eval, sweep, attend, exp}) {
    cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train");
  }
  attend->add_option("--focal", o.focal, "Focal word");
  attend->add_option("--context", o.context, "Context labels (default: whole vocabulary)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const cshot::RunConfig cfg = resolve(o, command);
    if (command == "gen") {
      const auto corpus = cshot::cmd_gen(cfg);
      std::cout << "wrote " << corpus.instances.size() << " instances to " << cfg.out << '\n';
    } else if (command == "train") {
      const auto result = cshot::cmd_train(cfg);
      std::cout << "trained " << cshot::to_string(cfg.variant) << " for " << result.losses.size()
                << " episodes; final loss " << (result.losses.empty() ? 0.0 : result.losses.back())
                << '\n';
    } else if (command == "eval") {
      const auto r = cshot::cmd_eval(cfg);
      std::cout << r.variant << " top-" << r.top_k << " accuracy " << r.mean << " +- " << r.ci95
                << " over " << r.n_episodes() << " episodes\n";
    } else if (command == "sweep") {
      std::cout << cshot::sweep_csv(cshot::cmd_sweep(cfg));
    } else if (command == "attend") {
      const auto dump = cshot::cmd_attend(cfg);
      std::cout << cshot::to_json(dump, cfg.attend.slice).at("top").dump() << '\n';
    } else {
      const auto rows = cshot::cmd_export(cfg);
      std::cout << "exported " << rows << " embeddings to " << cfg.out << '\n';
    }
  } catch (const cshot::Error& e) {
    return fail(e.category(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return EXIT_SUCCESS;
}
