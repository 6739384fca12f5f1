#pragma once

#include <span>
#include <utility>
#include <vector>

#include "contextshot/autodiff.hpp"
#include "contextshot/rng.hpp"

namespace cshot {

// Gated visuo-semantic unit:
//   h_v = tanh(W_v fx + b_v), h_c = tanh(W_c gc + b_c)
//   z   = sigmoid(W_z [h_v; h_c] + b_z)
//   out = z * fx + (1 - z) * gc          (element-wise)
// With `bias` false the b_* terms are skipped.
struct GateParams {
  Parameter wv, bv, wc, bc, wz, bz;
  bool bias = true;

  static GateParams init(std::size_t d_x, std::size_t d_z, bool bias, Rng& rng);
  std::size_t embed_dim() const { return wz.value.rows(); }
  std::vector<Parameter*> parameters() { return {&wv, &bv, &wc, &bc, &wz, &bz}; }
};

// Word-embedding refinement head: shared tanh layer d_w -> d_h, then a linear
// word-prototype head d_h -> d_x and a scalar sigmoid mixing head d_h -> 1.
struct RefineParams {
  Parameter wh, bh, wo, bo, wl, bl;

  static RefineParams init(std::size_t d_w, std::size_t d_h, std::size_t d_x, Rng& rng);
  std::vector<Parameter*> parameters() { return {&wh, &bh, &wo, &bo, &wl, &bl}; }
};

struct FusionTrace {
  Tensor fused;
  Tensor gate;
  Tensor visual;
  Tensor context;
};

struct FusionVars {
  Var fused;
  Var gate;
};

FusionVars gated_fuse(Var fx, Var gc, const GateParams& p);
FusionTrace gated_fuse(const Tensor& fx, const Tensor& gc, const GateParams& p);

Tensor class_prototype(std::span<const Tensor> embeddings);
Var class_prototype(std::span<const Var> embeddings);

Tensor context_aware_prototype(std::span<const std::pair<Tensor, Tensor>> support,
                               const GateParams& gate);

struct RefineResult {
  Tensor refined;
  Tensor word_prototype;
  double lambda = 0.0;
};

struct RefineVars {
  Var refined;
  Var word_prototype;
  Var lambda;  // rank-0 scalar
};

RefineVars refine_with_word(Var proto, Var word, const RefineParams& p);
RefineResult refine_with_word(const Tensor& proto, const Tensor& word, const RefineParams& p);

}  // namespace cshot
