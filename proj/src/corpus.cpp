#include "contextshot/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "contextshot/error.hpp"

namespace cshot {

using nlohmann::json;

void CorpusSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw SpecError(std::string(name) + " must lie in [0, 1]");
  };
  prob(informativeness, "informativeness");
  prob(ambiguity, "ambiguity");
  prob(word_share, "word_share");
  prob(test_fraction, "test_fraction");
  if (n_classes < 2) throw SpecError("n_classes must be at least 2");
  if (d_f == 0 || d_w < 2) throw SpecError("d_f must be positive and d_w at least 2");
  if (context_min > context_max) throw SpecError("context_min exceeds context_max");
  if (group_size == 0) throw SpecError("group_size must be positive");
  if (fixed_informative > context_min) {
    throw SpecError("fixed_informative exceeds context_min");
  }
  if (!(size_min > 0.0 && size_max >= size_min)) throw SpecError("size range must be positive and ordered");
  if (visual_noise < 0.0 || cluster_scale <= 0.0 || degrade_strength < 0.0) {
    throw SpecError("noise and scale settings must be nonnegative");
  }
  if (ambiguity == 1.0 && n_classes % 2 != 0) {
    throw SpecError("ambiguity 1 needs an even class count to pair every class");
  }
}

void to_json(json& j, const CorpusSpec& s) {
  j = json{{"n_classes", s.n_classes},
           {"instances_per_class", s.instances_per_class},
           {"d_f", s.d_f},
           {"d_w", s.d_w},
           {"context_min", s.context_min},
           {"context_max", s.context_max},
           {"informativeness", s.informativeness},
           {"ambiguity", s.ambiguity},
           {"group_size", s.group_size},
           {"fixed_informative", s.fixed_informative},
           {"cluster_scale", s.cluster_scale},
           {"visual_noise", s.visual_noise},
           {"word_share", s.word_share},
           {"size_min", s.size_min},
           {"size_max", s.size_max},
           {"degrade_small", s.degrade_small},
           {"degrade_strength", s.degrade_strength},
           {"test_fraction", s.test_fraction},
           {"sim_threshold", s.sim_threshold},
           {"min_count", s.min_count},
           {"seed", s.seed}};
}

void from_json(const json& j, CorpusSpec& s) {
  if (!j.is_object()) throw ConfigError("corpus spec must be an object");
  const json defaults = CorpusSpec{};
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown corpus key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        j.at(key).get_to(field);
      } catch (const json::exception&) {
        throw ConfigError(std::string("corpus key '") + key + "' has the wrong type");
      }
    }
  };
  get("n_classes", s.n_classes);
  get("instances_per_class", s.instances_per_class);
  get("d_f", s.d_f);
  get("d_w", s.d_w);
  get("context_min", s.context_min);
  get("context_max", s.context_max);
  get("informativeness", s.informativeness);
  get("ambiguity", s.ambiguity);
  get("group_size", s.group_size);
  get("fixed_informative", s.fixed_informative);
  get("cluster_scale", s.cluster_scale);
  get("visual_noise", s.visual_noise);
  get("word_share", s.word_share);
  get("size_min", s.size_min);
  get("size_max", s.size_max);
  get("degrade_small", s.degrade_small);
  get("degrade_strength", s.degrade_strength);
  get("test_fraction", s.test_fraction);
  get("sim_threshold", s.sim_threshold);
  get("min_count", s.min_count);
  get("seed", s.seed);
}

ClassPartition Corpus::partition() const {
  ClassPartition p;
  p.train.insert(train_classes.begin(), train_classes.end());
  p.test.insert(test_classes.begin(), test_classes.end());
  return p;
}

std::vector<std::string> Corpus::focal_classes(Split split) const {
  const auto& side = split == Split::Train ? train_classes : test_classes;
  std::unordered_set<std::string> members(side.begin(), side.end());
  std::vector<std::string> out;
  for (const auto& c : classes) {
    if (members.contains(c)) out.push_back(c);
  }
  return out;
}

std::map<std::string, std::vector<std::size_t>> Corpus::instances_by_class() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < instances.size(); ++i) out[instances[i].label].push_back(i);
  return out;
}

void Corpus::validate() const {
  std::unordered_set<std::string> train(train_classes.begin(), train_classes.end());
  for (const auto& t : test_classes) {
    if (train.contains(t)) throw IntegrityError("class '" + t + "' is in both train and test");
  }
  for (const auto& l : train_classes) {
    if (!words.contains(l)) throw IntegrityError("train label '" + l + "' missing from word table");
  }
  for (const auto& l : test_classes) {
    if (!words.contains(l)) throw IntegrityError("test label '" + l + "' missing from word table");
  }
  std::unordered_set<std::string> focal;
  for (const auto& c : classes) {
    if (!words.contains(c)) throw IntegrityError("class '" + c + "' missing from word table");
    if (!focal.insert(c).second) throw IntegrityError("class '" + c + "' listed twice");
  }
  std::map<std::string, std::size_t> counts;
  std::optional<std::size_t> feature_dim;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (!focal.contains(inst.label)) {
      throw IntegrityError("instance " + std::to_string(i) + " has unknown class '" + inst.label + "'");
    }
    if (!feature_dim) feature_dim = inst.features.size();
    if (inst.features.size() != *feature_dim) {
      throw IntegrityError("instance " + std::to_string(i) + " has feature dimension " +
                           std::to_string(inst.features.size()) + ", expected " +
                           std::to_string(*feature_dim));
    }
    for (const auto& l : inst.context) {
      if (!words.contains(l)) {
        throw IntegrityError("instance " + std::to_string(i) + " context label '" + l +
                             "' missing from word table");
      }
    }
    ++counts[inst.label];
  }
  for (const auto& c : classes) {
    if (counts[c] < min_count) {
      throw IntegrityError("class '" + c + "' has " + std::to_string(counts[c]) +
                           " instances, below min_count " + std::to_string(min_count));
    }
  }
}

namespace {

std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  double n = 0.0;
  do {
    for (double& x : v) x = standard_normal(rng);
    n = std::sqrt(dot(v, v));
  } while (n == 0.0);
  for (double& x : v) x /= n;
  return v;
}

// sqrt(share) * centroid + sqrt(1 - share) * u, with u a random unit vector
// orthogonal to the centroid; the result has unit norm.
std::vector<double> topic_member(const std::vector<double>& centroid, double share, Rng& rng) {
  std::vector<double> u;
  double n = 0.0;
  do {
    u = random_unit(centroid.size(), rng);
    const double proj = dot(u, centroid);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= proj * centroid[i];
    n = std::sqrt(dot(u, u));
  } while (n < 1e-6);
  const double a = std::sqrt(share);
  const double b = std::sqrt(1.0 - share);
  std::vector<double> out(centroid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * centroid[i] + b * u[i] / n;
  return out;
}

std::string focal_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "obj%03zu", k);
  return buf;
}

std::string scene_name(std::size_t k, std::size_t j) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ctx%03zu_%zu", k, j);
  return buf;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace

std::pair<std::vector<std::string>, std::vector<std::string>> split_classes(
    std::span<const std::string> classes, const WordTable& words, double test_fraction,
    double sim_threshold, Rng& rng) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw SpecError("test_fraction must lie in [0, 1]");
  }
  std::vector<std::string> order(classes.begin(), classes.end());
  for (const auto& c : order) words.index_of(c);
  shuffle(order, rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(order.size())));
  std::vector<std::string> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::string> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::vector<std::string> kept;
  for (const auto& t : test) {
    const auto tv = words.row(t);
    const bool too_close = std::any_of(train.begin(), train.end(), [&](const std::string& c) {
      return cosine_similarity(tv, words.row(c)) > sim_threshold;
    });
    if (!too_close) kept.push_back(t);
  }
  if (kept.empty()) {
    throw SpecError("no test classes survive the similarity filter; raise sim_threshold "
                    "or test_fraction");
  }
  // Restore input order on both sides so the split reads naturally.
  auto by_input = [&](std::vector<std::string>& v) {
    std::unordered_set<std::string> s(v.begin(), v.end());
    v.clear();
    for (const auto& c : classes)
      if (s.contains(c)) v.push_back(c);
  };
  by_input(train);
  by_input(kept);
  return {train, kept};
}

Corpus filter_rare(Corpus corpus, std::size_t min_count) {
  if (min_count == 0) throw DomainError("min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& inst : corpus.instances) ++counts[inst.label];
  std::unordered_set<std::string> keep;
  std::vector<std::string> classes;
  for (const auto& c : corpus.classes) {
    if (counts[c] >= min_count) {
      keep.insert(c);
      classes.push_back(c);
    }
  }
  corpus.classes = std::move(classes);
  std::erase_if(corpus.instances, [&](const SceneInstance& i) { return !keep.contains(i.label); });
  corpus.min_count = min_count;
  return corpus;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n = spec.n_classes;

  // Word vectors: one topic per focal class shared by its affinity group.
  WordTable words(spec.d_w);
  std::vector<std::vector<double>> centroids(n);
  for (auto& c : centroids) c = random_unit(spec.d_w, rng);
  std::vector<std::string> focal(n);
  for (std::size_t k = 0; k < n; ++k) {
    focal[k] = focal_name(k);
    words.add(focal[k], topic_member(centroids[k], spec.word_share, rng));
  }
  std::vector<std::vector<std::string>> groups(n);
  std::vector<std::string> scene;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < spec.group_size; ++j) {
      groups[k].push_back(scene_name(k, j));
      scene.push_back(groups[k].back());
      words.add(groups[k].back(), topic_member(centroids[k], spec.word_share, rng));
    }
  }
  const std::vector<std::string> vocab = words.vocabulary();

  // Classes are split before visual clusters are assigned so that twins
  // always land on the same side of the split.
  auto [train_f, test_f] =
      split_classes(focal, words, spec.test_fraction, spec.sim_threshold, rng);
  auto [train_s, test_s] =
      split_classes(scene, words, spec.test_fraction, spec.sim_threshold, rng);

  // Visual clusters: within each side, the first 2 * n_pairs classes of a
  // random order share a cluster pairwise.
  std::unordered_map<std::string, std::size_t> focal_index;
  for (std::size_t k = 0; k < n; ++k) focal_index.emplace(focal[k], k);
  std::vector<std::size_t> cluster_of(n);
  std::size_t n_clusters = 0;
  for (const auto* side : {&train_f, &test_f}) {
    std::vector<std::size_t> order;
    for (const auto& c : *side) order.push_back(focal_index.at(c));
    shuffle(order, rng);
    const std::size_t m = order.size();
    if (spec.ambiguity == 1.0 && m % 2 != 0) {
      throw SpecError("ambiguity 1 needs an even class count on each side of the split (" +
                      std::to_string(train_f.size()) + " train, " + std::to_string(test_f.size()) +
                      " test)");
    }
    const std::size_t n_pairs =
        static_cast<std::size_t>(std::floor(spec.ambiguity * static_cast<double>(m) / 2.0 + 1e-9));
    for (std::size_t i = 0; i < m;) {
      if (i < 2 * n_pairs) {
        cluster_of[order[i]] = cluster_of[order[i + 1]] = n_clusters++;
        i += 2;
      } else {
        cluster_of[order[i++]] = n_clusters++;
      }
    }
  }
  std::vector<std::vector<double>> centers(n_clusters, std::vector<double>(spec.d_f));
  for (auto& c : centers)
    for (double& x : c) x = spec.cluster_scale * standard_normal(rng);

  Corpus corpus;
  corpus.words = std::move(words);
  corpus.classes = focal;
  corpus.min_count = spec.min_count;

  const double log_min = std::log(spec.size_min);
  const double log_max = std::log(spec.size_max);
  std::unordered_set<std::string> group_set;
  for (std::size_t k = 0; k < n; ++k) {
    group_set = {groups[k].begin(), groups[k].end()};
    std::vector<std::string> outside;
    if (spec.fixed_informative > 0) {
      for (const auto& w : vocab)
        if (!group_set.contains(w)) outside.push_back(w);
    }
    for (std::size_t i = 0; i < spec.instances_per_class; ++i) {
      SceneInstance inst;
      inst.label = focal[k];
      const double u = log_max > log_min ? uniform01(rng) : 1.0;
      inst.size = std::exp(log_min + u * (log_max - log_min));
      double noise = spec.visual_noise;
      if (spec.degrade_small) noise *= 1.0 + spec.degrade_strength * (1.0 - u);
      inst.features.resize(spec.d_f);
      for (std::size_t d = 0; d < spec.d_f; ++d) {
        inst.features[d] = centers[cluster_of[k]][d] + noise * standard_normal(rng);
      }
      const std::size_t n_s =
          spec.context_min + uniform_index(rng, spec.context_max - spec.context_min + 1);
      if (spec.fixed_informative > 0) {
        std::vector<std::string> g = groups[k];
        shuffle(g, rng);
        for (std::size_t j = 0; j < spec.fixed_informative; ++j) {
          inst.context.push_back(g[j % g.size()]);
        }
        while (inst.context.size() < n_s) {
          inst.context.push_back(outside[uniform_index(rng, outside.size())]);
        }
        shuffle(inst.context, rng);
      } else {
        for (std::size_t j = 0; j < n_s; ++j) {
          if (uniform01(rng) < spec.informativeness) {
            inst.context.push_back(groups[k][uniform_index(rng, groups[k].size())]);
          } else {
            inst.context.push_back(vocab[uniform_index(rng, vocab.size())]);
          }
        }
      }
      corpus.instances.push_back(std::move(inst));
    }
  }

  corpus.train_classes = train_f;
  corpus.train_classes.insert(corpus.train_classes.end(), train_s.begin(), train_s.end());
  corpus.test_classes = test_f;
  corpus.test_classes.insert(corpus.test_classes.end(), test_s.begin(), test_s.end());

  json prov;
  prov["generator"] = "contextshot.synthetic";
  prov["spec"] = spec;
  prov["visual_clusters"] = n_clusters;
  corpus.provenance = std::move(prov);

  corpus = filter_rare(std::move(corpus), spec.min_count);
  corpus.validate();
  return corpus;
}

// ---------------------------------------------------------------------------
// JSON-lines storage

namespace {

std::filesystem::path words_path_for(const std::filesystem::path& corpus_path) {
  return corpus_path.string() + ".words.tsv";
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus " + path.string());
  const auto wpath = words_path_for(path);
  json header{{"schema", kCorpusSchema},
              {"provenance", corpus.provenance},
              {"min_count", corpus.min_count},
              {"classes", corpus.classes},
              {"train", corpus.train_classes},
              {"test", corpus.test_classes},
              {"n_instances", corpus.instances.size()},
              {"words", wpath.filename().string()}};
  out << header.dump() << '\n';
  for (const auto& inst : corpus.instances) {
    json line{{"class", inst.label},
              {"features", inst.features},
              {"context", inst.context},
              {"size", inst.size ? json(*inst.size) : json(nullptr)}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing corpus " + path.string());
  save_word_table(corpus.words, wpath);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::string line;
  std::size_t lineno = 0;
  auto parse_line = [&](const std::string& text) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
  };
  if (!std::getline(in, line)) throw ParseError(1, "missing header line");
  ++lineno;
  const json header = parse_line(line);
  Corpus c;
  std::size_t expected = 0;
  std::string words_file;
  try {
    if (header.at("schema").get<std::string>() != kCorpusSchema) {
      throw ParseError(lineno, "unsupported schema '" + header.at("schema").get<std::string>() + "'");
    }
    c.provenance = header.at("provenance");
    c.min_count = header.at("min_count").get<std::size_t>();
    c.classes = header.at("classes").get<std::vector<std::string>>();
    c.train_classes = header.at("train").get<std::vector<std::string>>();
    c.test_classes = header.at("test").get<std::vector<std::string>>();
    expected = header.at("n_instances").get<std::size_t>();
    words_file = header.at("words").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(lineno, std::string("bad header: ") + e.what());
  }
  c.instances.reserve(expected);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line);
    SceneInstance inst;
    try {
      inst.label = j.at("class").get<std::string>();
      inst.features = j.at("features").get<std::vector<double>>();
      inst.context = j.at("context").get<std::vector<std::string>>();
      if (j.contains("size") && !j.at("size").is_null()) inst.size = j.at("size").get<double>();
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("bad instance: ") + e.what());
    }
    c.instances.push_back(std::move(inst));
  }
  if (c.instances.size() != expected) {
    throw ParseError(lineno, "truncated corpus: header declares " + std::to_string(expected) +
                                 " instances, found " + std::to_string(c.instances.size()));
  }
  c.words = load_word_table(path.parent_path() / words_file);
  c.validate();
  return c;
}

}  // namespace cshot
