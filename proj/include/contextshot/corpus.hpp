#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "contextshot/context.hpp"
#include "contextshot/embeddings.hpp"
#include "contextshot/rng.hpp"

namespace cshot {

inline constexpr const char* kCorpusSchema = "contextshot.corpus/1";

// One focal object: its class, raw feature vector, the labels of the objects
// around it and an optional scalar size (e.g. bounding-box area).
struct SceneInstance {
  std::string label;
  std::vector<double> features;
  std::vector<std::string> context;
  std::optional<double> size;

  friend bool operator==(const SceneInstance&, const SceneInstance&) = default;
};

// Knobs of the synthetic scene generator.
//
// Every focal class owns an affinity group of `group_size` context words
// whose word vectors share a topic centroid with the class word. A context
// label is drawn from the focal class's group with probability
// `informativeness` and uniformly from the whole vocabulary otherwise.
// `ambiguity` is the fraction of classes that are paired up to share a
// single visual cluster.
struct CorpusSpec {
  std::size_t n_classes = 300;
  std::size_t instances_per_class = 50;
  std::size_t d_f = 32;
  std::size_t d_w = 16;
  std::size_t context_min = 3;
  std::size_t context_max = 8;
  double informativeness = 0.95;
  double ambiguity = 0.8;
  std::size_t group_size = 4;
  // When nonzero, every context holds exactly this many group labels and the
  // remaining slots are decoys from outside the group (informativeness unused).
  std::size_t fixed_informative = 0;
  double cluster_scale = 1.0;
  double visual_noise = 1.5;
  double word_share = 0.5;
  double size_min = 64.0;
  double size_max = 65536.0;
  // Adds feature noise that grows as log-size shrinks: the smallest
  // instances get (1 + degrade_strength) times the base noise.
  bool degrade_small = false;
  double degrade_strength = 2.0;
  double test_fraction = 1.0 / 3.0;
  double sim_threshold = 0.75;
  std::size_t min_count = 10;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

void to_json(nlohmann::json& j, const CorpusSpec& s);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, CorpusSpec& s);

enum class Split { Train, Test };

struct Corpus {
  nlohmann::json provenance = nlohmann::json::object();
  WordTable words;
  std::vector<std::string> classes;        // focal-eligible classes
  std::vector<std::string> train_classes;  // vocabulary partition used for
  std::vector<std::string> test_classes;   // splits and context sourcing
  std::vector<SceneInstance> instances;
  std::size_t min_count = 1;

  ClassPartition partition() const;
  // Focal classes on one side of the split, in class-list order.
  std::vector<std::string> focal_classes(Split split) const;
  std::map<std::string, std::vector<std::size_t>> instances_by_class() const;
  // Throws IntegrityError naming the first violated invariant.
  void validate() const;

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.provenance == b.provenance && a.words == b.words && a.classes == b.classes &&
           a.train_classes == b.train_classes && a.test_classes == b.test_classes &&
           a.instances == b.instances && a.min_count == b.min_count;
  }
};

Corpus generate_corpus(const CorpusSpec& spec);

// Random partition with round(test_fraction * n) test classes, then drops every
// test class whose cosine similarity to some train class is strictly above
// sim_threshold.
std::pair<std::vector<std::string>, std::vector<std::string>> split_classes(
    std::span<const std::string> classes, const WordTable& words, double test_fraction,
    double sim_threshold, Rng& rng);

// Drops focal classes with fewer than min_count instances (and their
// instances). Context labels are left untouched.
Corpus filter_rare(Corpus corpus, std::size_t min_count);

// JSON-lines: a header object, then one instance per line. The word table
// is written next to the corpus as `<file>.words.tsv`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace cshot
