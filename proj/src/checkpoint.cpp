#include "contextshot/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "contextshot/error.hpp"

namespace cshot {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'H', 'O', 'T', 'C', 'K', 'P'};

std::uint64_t fnv1a(const unsigned char* p, std::size_t n,
                    std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void str64(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, std::size_t end) : buf_(buf), end_(end) {}

  void need(std::size_t n) const {
    if (n > end_ - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<unsigned char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint64_t tensor_hash(const Tensor& t) {
  Writer w;
  for (std::size_t d : t.shape()) w.u64(d);
  for (double v : t.data()) w.f64(v);
  return fnv1a(w.buffer().data(), w.buffer().size());
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str64(nlohmann::json(ckpt.config).dump());
  const auto params = ckpt.params.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.str32(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.u64(d);
    for (double v : p->value.data()) w.f64(v);
  }
  w.u64(fnv1a(w.buffer().data(), w.buffer().size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(w.buffer().data()),
            static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 4 + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + " is not a contextshot checkpoint");
  }
  Reader r(buf, buf.size() - 8);
  r.str(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint schema version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(buf[buf.size() - 8 + i]) << (8 * i);
  if (stored != fnv1a(buf.data(), buf.size() - 8)) {
    throw IntegrityError("checkpoint checksum mismatch in " + path.string());
  }

  Checkpoint ckpt;
  const std::uint64_t config_len = r.u64();
  try {
    ckpt.config = nlohmann::json::parse(r.str(config_len)).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  ckpt.params = ModelParams::init(ckpt.config.model, 0);

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : ckpt.params.parameters()) by_name.emplace(p->name, p);
  const std::uint32_t count = r.u32();
  if (count != by_name.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint tensor '" + name + "' is unknown or repeated");
    Parameter& p = *it->second;
    by_name.erase(it);
    std::vector<std::size_t> shape(r.u32());
    for (auto& d : shape) d = r.u64();
    if (shape != p.value.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_string(shape) +
                        ", model expects " + shape_string(p.value.shape()));
    }
    for (double& v : p.value.data()) v = r.f64();
  }
  if (r.pos() != buf.size() - 8) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

std::string checkpoint_manifest(const Checkpoint& ckpt) {
  std::ostringstream os;
  os << "contextshot checkpoint v" << kCheckpointVersion << '\n';
  os << "variant " << to_string(ckpt.config.variant) << '\n';
  os << "seed " << ckpt.config.seed << '\n';
  os << "episodes " << ckpt.config.optim.episodes << '\n';
  for (const Parameter* p : ckpt.params.parameters()) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(tensor_hash(p->value)));
    os << p->name << ' ' << shape_string(p->value.shape()) << ' ' << hash << '\n';
  }
  return os.str();
}

}  // namespace cshot
