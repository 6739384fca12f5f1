#include "contextshot/fusion.hpp"

#include "contextshot/error.hpp"

namespace cshot {

GateParams GateParams::init(std::size_t d_x, std::size_t d_z, bool bias, Rng& rng) {
  GateParams g{Parameter("gate.wv", xavier_uniform(d_z, d_x, rng)),
               Parameter("gate.bv", Tensor({d_z})),
               Parameter("gate.wc", xavier_uniform(d_z, d_x, rng)),
               Parameter("gate.bc", Tensor({d_z})),
               Parameter("gate.wz", xavier_uniform(d_x, 2 * d_z, rng)),
               Parameter("gate.bz", Tensor({d_x})),
               bias};
  return g;
}

RefineParams RefineParams::init(std::size_t d_w, std::size_t d_h, std::size_t d_x, Rng& rng) {
  return {Parameter("refine.wh", xavier_uniform(d_h, d_w, rng)),
          Parameter("refine.bh", Tensor({d_h})),
          Parameter("refine.wo", xavier_uniform(d_x, d_h, rng)),
          Parameter("refine.bo", Tensor({d_x})),
          Parameter("refine.wl", xavier_uniform(1, d_h, rng)),
          Parameter("refine.bl", Tensor({1}))};
}

namespace {

Var affine(Tape& t, const Parameter& w, const Parameter& b, Var x, bool bias) {
  Var y = ad::matmul(t.param(w), x);
  return bias ? ad::add(y, t.param(b)) : y;
}

}  // namespace

FusionVars gated_fuse(Var fx, Var gc, const GateParams& p) {
  const std::size_t d = p.embed_dim();
  if (fx.value().rank() != 1 || gc.value().rank() != 1 || fx.value().size() != d ||
      gc.value().size() != d) {
    throw DimensionError("gated_fuse: inputs " + shape_string(fx.shape()) + " and " +
                         shape_string(gc.shape()) + ", gate expects [" + std::to_string(d) + "]");
  }
  Tape& t = fx.tape();
  Var hv = ad::tanh(affine(t, p.wv, p.bv, fx, p.bias));
  Var hc = ad::tanh(affine(t, p.wc, p.bc, gc, p.bias));
  Var z = ad::sigmoid(affine(t, p.wz, p.bz, ad::concat(hv, hc), p.bias));
  // gc + z * (fx - gc): algebraically z*fx + (1-z)*gc, and exact when fx == gc.
  Var fused = ad::add(gc, ad::mul(z, ad::sub(fx, gc)));
  return {fused, z};
}

FusionTrace gated_fuse(const Tensor& fx, const Tensor& gc, const GateParams& p) {
  Tape t;
  FusionVars v = gated_fuse(t.constant(fx), t.constant(gc), p);
  return {v.fused.value(), v.gate.value(), fx, gc};
}

Tensor class_prototype(std::span<const Tensor> embeddings) {
  if (embeddings.empty()) throw DomainError("class_prototype: no embeddings");
  Tape t;
  std::vector<Var> vs;
  for (const auto& e : embeddings) vs.push_back(t.constant(e));
  return class_prototype(vs).value();
}

Var class_prototype(std::span<const Var> embeddings) {
  if (embeddings.empty()) throw DomainError("class_prototype: no embeddings");
  return ad::mean(embeddings);
}

Tensor context_aware_prototype(std::span<const std::pair<Tensor, Tensor>> support,
                               const GateParams& gate) {
  if (support.empty()) throw DomainError("context_aware_prototype: empty support");
  Tape t;
  std::vector<Var> fused;
  for (const auto& [fx, gc] : support) {
    fused.push_back(gated_fuse(t.constant(fx), t.constant(gc), gate).fused);
  }
  return ad::mean(fused).value();
}

RefineVars refine_with_word(Var proto, Var word, const RefineParams& p) {
  if (word.value().rank() != 1 || word.value().size() != p.wh.value.cols() ||
      proto.value().rank() != 1 || proto.value().size() != p.wo.value.rows()) {
    throw DimensionError("refine_with_word: prototype " + shape_string(proto.shape()) + ", word " +
                         shape_string(word.shape()));
  }
  Tape& t = proto.tape();
  Var h = ad::tanh(affine(t, p.wh, p.bh, word, true));
  Var word_proto = affine(t, p.wo, p.bo, h, true);
  Var lambda = ad::reshape(ad::sigmoid(affine(t, p.wl, p.bl, h, true)), {});
  Var refined = ad::add(ad::scale_by(proto, lambda), ad::scale_by(word_proto, ad::one_minus(lambda)));
  return {refined, word_proto, lambda};
}

RefineResult refine_with_word(const Tensor& proto, const Tensor& word, const RefineParams& p) {
  Tape t;
  RefineVars v = refine_with_word(t.constant(proto), t.constant(word), p);
  return {v.refined.value(), v.word_prototype.value(), v.lambda.value().item()};
}

}  // namespace cshot
