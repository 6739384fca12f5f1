#include "contextshot/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "contextshot/error.hpp"

namespace cshot {

ModelDims ModelDims::resolved() const {
  ModelDims d = *this;
  if (d.d_c == 0) d.d_c = d.d_x;
  if (d.d_h == 0) d.d_h = d.d_w;
  if (d.d_hidden == 0) d.d_hidden = d.d_x;
  if (d.d_f == 0 || d.d_x == 0 || d.d_w == 0 || d.d_z == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  return d;
}

VariantFlags flags(ModelVariant v) {
  switch (v) {
    case ModelVariant::ProtoNet: return {false, ContextPooling::None, false};
    case ModelVariant::AM3Proto: return {false, ContextPooling::None, true};
    case ModelVariant::ProtoCavg: return {true, ContextPooling::Average, false};
    case ModelVariant::ProtoCCAM: return {true, ContextPooling::Attention, false};
    case ModelVariant::ProtoCavgW2V: return {true, ContextPooling::Average, true};
    case ModelVariant::Full: return {true, ContextPooling::Attention, true};
  }
  return {false, ContextPooling::None, false};
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::ProtoNet: return "protonet";
    case ModelVariant::AM3Proto: return "am3-proto";
    case ModelVariant::ProtoCavg: return "proto-cavg";
    case ModelVariant::ProtoCCAM: return "proto-ccam";
    case ModelVariant::ProtoCavgW2V: return "proto-cavg-w2v";
    case ModelVariant::Full: return "full";
  }
  return "full";
}

ModelVariant parse_variant(const std::string& name) {
  std::string n;
  for (char c : name) {
    if (c == '_') c = '-';
    n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (ModelVariant v : all_variants()) {
    if (to_string(v) == n) return v;
  }
  if (n == "am3") return ModelVariant::AM3Proto;
  if (n == "ours" || n == "proto-ccam-w2v") return ModelVariant::Full;
  throw ConfigError("unknown variant '" + name +
                    "' (expected protonet, am3-proto, proto-cavg, proto-ccam, proto-cavg-w2v, full)");
}

const std::vector<ModelVariant>& all_variants() {
  static const std::vector<ModelVariant> v{ModelVariant::ProtoNet,  ModelVariant::AM3Proto,
                                           ModelVariant::ProtoCavg, ModelVariant::ProtoCCAM,
                                           ModelVariant::ProtoCavgW2V, ModelVariant::Full};
  return v;
}

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  const ModelDims d = dims.resolved();
  Rng rng(seed);
  ModelParams p;
  p.dims = d;
  p.encoder = EncoderParams::init(d.d_f, d.d_hidden, d.d_x, rng);
  p.projector = ProjectorParams::init(d.d_w, d.d_x, rng);
  p.ccam = CcamParams::init(d.d_c, d.d_w, rng);
  p.gate = GateParams::init(d.d_x, d.d_z, d.gate_bias, rng);
  p.refine = RefineParams::init(d.d_w, d.d_h, d.d_x, rng);
  return p;
}

std::vector<Parameter*> ModelParams::parameters() {
  std::vector<Parameter*> out;
  for (auto* group : {&encoder.w1, &encoder.b1, &encoder.w2, &encoder.b2, &projector.w,
                      &projector.b, &ccam.wk, &ccam.wq, &gate.wv, &gate.bv, &gate.wc, &gate.bc,
                      &gate.wz, &gate.bz, &refine.wh, &refine.bh, &refine.wo, &refine.bo,
                      &refine.wl, &refine.bl}) {
    out.push_back(group);
  }
  return out;
}

std::vector<const Parameter*> ModelParams::parameters() const {
  auto mut = const_cast<ModelParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void ModelParams::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

double ModelParams::norm() const {
  double s = 0.0;
  for (const Parameter* p : parameters()) s += p->value.squared_norm();
  return std::sqrt(s);
}

}  // namespace cshot
