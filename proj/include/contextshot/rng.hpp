#pragma once

#include <cstdint>
#include <random>

#include "contextshot/tensor.hpp"

namespace cshot {

using Rng = std::mt19937_64;

// splitmix64 finalizer; maps (base, stream) to a well-mixed child seed so
// independent streams (episodes, noise, workers) never share state.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

double uniform01(Rng& rng);
std::size_t uniform_index(Rng& rng, std::size_t n);
double standard_normal(Rng& rng);

}  // namespace cshot
