#include "contextshot/config.hpp"

#include <fstream>
#include <sstream>

#include "contextshot/error.hpp"

namespace cshot {

using nlohmann::json;

namespace {

// Reads the keys of `j` into fields, rejecting anything not listed in the
// serialized defaults.
class Reader {
 public:
  Reader(const json& j, const json& defaults, std::string section)
      : j_(j), section_(std::move(section)) {
    if (!j.is_object()) throw ConfigError(section_ + " must be an object");
    for (const auto& [key, value] : j.items()) {
      if (!defaults.contains(key)) throw ConfigError("unknown " + section_ + " key '" + key + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& field) const {
    if (!j_.contains(key)) return;
    try {
      j_.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ConfigError(section_ + " key '" + key + "' has the wrong type");
    }
  }

  const json* find(const char* key) const { return j_.contains(key) ? &j_.at(key) : nullptr; }

  std::string string(const char* key, std::string fallback) const {
    get(key, fallback);
    return fallback;
  }

 private:
  const json& j_;
  std::string section_;
};

}  // namespace

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + name + "' (expected train or test)");
}

void to_json(json& j, const ModelDims& d) {
  j = json{{"d_f", d.d_f},   {"d_x", d.d_x},   {"d_w", d.d_w},
           {"d_c", d.d_c},   {"d_z", d.d_z},   {"d_h", d.d_h},
           {"d_hidden", d.d_hidden},           {"gate_bias", d.gate_bias},
           {"squared_distance", d.squared_distance}};
}

void from_json(const json& j, ModelDims& d) {
  const Reader r(j, ModelDims{}, "model");
  r.get("d_f", d.d_f);
  r.get("d_x", d.d_x);
  r.get("d_w", d.d_w);
  r.get("d_c", d.d_c);
  r.get("d_z", d.d_z);
  r.get("d_h", d.d_h);
  r.get("d_hidden", d.d_hidden);
  r.get("gate_bias", d.gate_bias);
  r.get("squared_distance", d.squared_distance);
}

void to_json(json& j, const EvalConfig& c) {
  j = json{{"episodes", c.episodes},
           {"top_k", c.top_k},
           {"workers", c.workers},
           {"split", to_string(c.split)}};
}

void from_json(const json& j, EvalConfig& c) {
  const Reader r(j, EvalConfig{}, "eval");
  r.get("episodes", c.episodes);
  r.get("top_k", c.top_k);
  r.get("workers", c.workers);
  c.split = parse_split(r.string("split", to_string(c.split)));
}

void to_json(json& j, const SweepConfig& c) {
  j = json{{"variants", c.variants}, {"ways", c.ways}, {"shots", c.shots}, {"p_noise", c.p_noise}};
}

void from_json(const json& j, SweepConfig& c) {
  const Reader r(j, SweepConfig{}, "sweep");
  r.get("variants", c.variants);
  r.get("ways", c.ways);
  r.get("shots", c.shots);
  r.get("p_noise", c.p_noise);
}

void to_json(json& j, const AttendConfig& c) {
  j = json{{"focal", c.focal}, {"context", c.context}, {"slice", c.slice}};
}

void from_json(const json& j, AttendConfig& c) {
  const Reader r(j, AttendConfig{}, "attend");
  r.get("focal", c.focal);
  r.get("context", c.context);
  r.get("slice", c.slice);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"seed", c.seed},
           {"out", c.out},
           {"variant", to_string(c.variant)},
           {"corpus_path", c.corpus_path},
           {"checkpoint", c.checkpoint},
           {"corpus", c.corpus},
           {"episode", c.episode},
           {"model", c.model},
           {"optim", c.optim},
           {"eval", c.eval},
           {"sweep", c.sweep},
           {"attend", c.attend}};
}

void from_json(const json& j, RunConfig& c) {
  const Reader r(j, RunConfig{}, "config");
  r.get("seed", c.seed);
  r.get("out", c.out);
  c.variant = parse_variant(r.string("variant", to_string(c.variant)));
  r.get("corpus_path", c.corpus_path);
  r.get("checkpoint", c.checkpoint);
  if (const json* s = r.find("corpus")) c.corpus = s->get<CorpusSpec>();
  if (const json* s = r.find("episode")) c.episode = s->get<EpisodeSpec>();
  if (const json* s = r.find("model")) c.model = s->get<ModelDims>();
  if (const json* s = r.find("optim")) c.optim = s->get<OptimizerConfig>();
  if (const json* s = r.find("eval")) c.eval = s->get<EvalConfig>();
  if (const json* s = r.find("sweep")) c.sweep = s->get<SweepConfig>();
  if (const json* s = r.find("attend")) c.attend = s->get<AttendConfig>();
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return j.get<RunConfig>();
}

std::string dump_config(const RunConfig& c) { return json(c).dump(2) + "\n"; }

}  // namespace cshot
