#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "contextshot/autodiff.hpp"
#include "contextshot/rng.hpp"

namespace cshot {

// Frozen vocabulary of class names and their semantic vectors. Lookup of an
// unknown name throws LookupError; there is no silent zero vector.
class WordTable {
 public:
  WordTable() = default;
  explicit WordTable(std::size_t dim) : dim_(dim) {}

  void add(std::string name, std::span<const double> vec);

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& vocabulary() const noexcept { return names_; }
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::span<const double> row(std::size_t i) const;
  std::span<const double> row(std::string_view name) const { return row(index_of(name)); }
  Tensor vector(std::string_view name) const;

  // FNV-1a over names and raw bytes of the vectors.
  std::uint64_t fingerprint() const;

  friend bool operator==(const WordTable& a, const WordTable& b) {
    return a.dim_ == b.dim_ && a.names_ == b.names_ && a.data_ == b.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> names_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Text format: one record per line, `<name>\t<v1> <v2> ... <v_dw>`.
WordTable load_word_table(std::istream& in);
WordTable load_word_table(const std::filesystem::path& path);
// Shortest round-trip decimal representation, so save -> load is bit-exact.
void save_word_table(const WordTable& table, std::ostream& out);
void save_word_table(const WordTable& table, const std::filesystem::path& path);

// Two-layer visual encoder: tanh(W1 x + b1) followed by a linear W2 h + b2.
struct EncoderParams {
  Parameter w1, b1, w2, b2;

  static EncoderParams init(std::size_t d_f, std::size_t d_hidden, std::size_t d_x, Rng& rng);
  std::size_t input_dim() const { return w1.value.cols(); }
  std::size_t output_dim() const { return w2.value.rows(); }
  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

// Context projection g: tanh(W c + b), d_w -> d_x.
struct ProjectorParams {
  Parameter w, b;

  static ProjectorParams init(std::size_t d_w, std::size_t d_x, Rng& rng);
  std::size_t input_dim() const { return w.value.cols(); }
  std::size_t output_dim() const { return w.value.rows(); }
  std::vector<Parameter*> parameters() { return {&w, &b}; }
};

Var encode_visual(Var raw, const EncoderParams& p);
Tensor encode_visual(const Tensor& raw, const EncoderParams& p);

Var project_context(Var c, const ProjectorParams& p);
Tensor project_context(const Tensor& c, const ProjectorParams& p);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace cshot
