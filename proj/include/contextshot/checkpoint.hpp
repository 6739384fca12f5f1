#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "contextshot/config.hpp"
#include "contextshot/model.hpp"

namespace cshot {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ModelParams params;
};

// Binary layout, little-endian:
//   "CSHOTCKP" | u32 version | u64 len, config JSON | u32 count |
//   count x (u32 len, name | u32 rank, u64 dims... | f64 values...) | u64 FNV-1a of all prior bytes
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws FormatError on a bad magic, version mismatch, unknown or missing
// tensor, or shape mismatch; IntegrityError on a checksum mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Human-readable summary: version, variant, seed and one line per tensor
// with its shape and a content hash.
std::string checkpoint_manifest(const Checkpoint& ckpt);

}  // namespace cshot
