#include "contextshot/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "contextshot/error.hpp"

namespace cshot {

void WordTable::add(std::string name, std::span<const double> vec) {
  if (name.empty()) throw FormatError("word table: empty name");
  if (names_.empty() && dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) {
    throw FormatError("word table: vector for '" + name + "' has dimension " +
                      std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
  }
  if (index_.contains(name)) throw FormatError("word table: duplicate name '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  data_.insert(data_.end(), vec.begin(), vec.end());
}

bool WordTable::contains(std::string_view name) const {
  return index_.find(std::string(name)) != index_.end();
}

std::size_t WordTable::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw LookupError("word '" + std::string(name) + "' not in word table");
  return it->second;
}

std::span<const double> WordTable::row(std::size_t i) const {
  return std::span<const double>(data_).subspan(i * dim_, dim_);
}

Tensor WordTable::vector(std::string_view name) const {
  auto r = row(name);
  return Tensor::vector(std::vector<double>(r.begin(), r.end()));
}

std::uint64_t WordTable::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& n : names_) mix(n.data(), n.size() + 1);
  mix(data_.data(), data_.size() * sizeof(double));
  return h;
}

WordTable load_word_table(std::istream& in) {
  WordTable table;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> vec;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError(lineno, "expected '<name>\\t<values>'");
    vec.clear();
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t')) {
        throw ParseError(lineno, "malformed number");
      }
      vec.push_back(v);
      p = next;
    }
    if (vec.empty()) throw ParseError(lineno, "no vector values");
    if (table.size() > 0 && vec.size() != table.dim()) {
      throw FormatError("word table line " + std::to_string(lineno) + ": dimension " +
                        std::to_string(vec.size()) + " differs from " + std::to_string(table.dim()));
    }
    try {
      table.add(line.substr(0, tab), vec);
    } catch (const FormatError& e) {
      throw FormatError("word table line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return table;
}

WordTable load_word_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word table " + path.string());
  return load_word_table(in);
}

void save_word_table(const WordTable& table, std::ostream& out) {
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.vocabulary()[i] << '\t';
    auto r = table.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) out << ' ';
      auto res = std::to_chars(buf, buf + sizeof buf, r[j]);
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

void save_word_table(const WordTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write word table " + path.string());
  save_word_table(table, out);
}

EncoderParams EncoderParams::init(std::size_t d_f, std::size_t d_hidden, std::size_t d_x,
                                  Rng& rng) {
  return {Parameter("encoder.w1", xavier_uniform(d_hidden, d_f, rng)),
          Parameter("encoder.b1", Tensor({d_hidden})),
          Parameter("encoder.w2", xavier_uniform(d_x, d_hidden, rng)),
          Parameter("encoder.b2", Tensor({d_x}))};
}

ProjectorParams ProjectorParams::init(std::size_t d_w, std::size_t d_x, Rng& rng) {
  return {Parameter("projector.w", xavier_uniform(d_x, d_w, rng)),
          Parameter("projector.b", Tensor({d_x}))};
}

Var encode_visual(Var raw, const EncoderParams& p) {
  if (raw.value().rank() != 1 || raw.value().size() != p.input_dim()) {
    throw DimensionError("encode_visual: input " + shape_string(raw.shape()) + " but encoder expects [" +
                         std::to_string(p.input_dim()) + "]");
  }
  Tape& t = raw.tape();
  Var h = ad::tanh(ad::add(ad::matmul(t.param(p.w1), raw), t.param(p.b1)));
  return ad::add(ad::matmul(t.param(p.w2), h), t.param(p.b2));
}

Tensor encode_visual(const Tensor& raw, const EncoderParams& p) {
  Tape t;
  return encode_visual(t.constant(raw), p).value();
}

Var project_context(Var c, const ProjectorParams& p) {
  if (c.value().rank() != 1 || c.value().size() != p.input_dim()) {
    throw DimensionError("project_context: input " + shape_string(c.shape()) +
                         " but projector expects [" + std::to_string(p.input_dim()) + "]");
  }
  Tape& t = c.tape();
  return ad::tanh(ad::add(ad::matmul(t.param(p.w), c), t.param(p.b)));
}

Tensor project_context(const Tensor& c, const ProjectorParams& p) {
  Tape t;
  return project_context(t.constant(c), p).value();
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine_similarity: lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine_similarity of a zero vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

}  // namespace cshot
