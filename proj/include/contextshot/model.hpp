#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "contextshot/context.hpp"
#include "contextshot/embeddings.hpp"
#include "contextshot/fusion.hpp"

namespace cshot {

struct ModelDims {
  std::size_t d_f = 32;
  std::size_t d_x = 64;
  std::size_t d_w = 16;
  std::size_t d_c = 0;        // CCAM attention width; 0 means d_x
  std::size_t d_z = 32;
  std::size_t d_h = 0;        // refinement hidden width; 0 means d_w
  std::size_t d_hidden = 0;   // encoder hidden width; 0 means d_x
  bool gate_bias = true;
  bool squared_distance = true;

  ModelDims resolved() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

enum class ModelVariant { ProtoNet, AM3Proto, ProtoCavg, ProtoCCAM, ProtoCavgW2V, Full };

enum class ContextPooling { None, Average, Attention };

struct VariantFlags {
  bool uses_context;
  ContextPooling pooling;
  bool uses_word_refine;
};

VariantFlags flags(ModelVariant v);
std::string to_string(ModelVariant v);
ModelVariant parse_variant(const std::string& name);
const std::vector<ModelVariant>& all_variants();

// Every trainable tensor of the model. Variants only touch the subset their
// flags enable; the rest keep zero gradients.
struct ModelParams {
  ModelDims dims;
  EncoderParams encoder;
  ProjectorParams projector;
  CcamParams ccam;
  GateParams gate;
  RefineParams refine;

  static ModelParams init(const ModelDims& dims, std::uint64_t seed);
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();
  double norm() const;
};

}  // namespace cshot
