#include "contextshot/autodiff.hpp"

#include <cmath>

#include "contextshot/error.hpp"

namespace cshot {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("value() on unbound Var");
  return tape_->value(id_);
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, requires_grad,
                        requires_grad ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return record(std::move(value), false, {}); }

Var Tape::param(const Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  Var v = record(p.value, true, [](Tape&, const Tensor&) {});
  bound_.emplace(&p, v.id());
  return v;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::add_grad(std::size_t id, const Tensor& delta) {
  if (!nodes_[id].requires_grad) return;
  grad_buffer(id).add_inplace(delta);
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

Tensor Tape::gradient(const Parameter& p) const {
  auto it = bound_.find(&p);
  if (it == bound_.end()) return Tensor::zeros_like(p.value);
  const Node& n = nodes_[it->second];
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: root belongs to a different tape");
  if (value(loss.id()).size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " +
                        shape_string(value(loss.id()).shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
  }
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::accumulate_grads(std::span<Parameter* const> params) const {
  for (Parameter* p : params) {
    auto it = bound_.find(p);
    if (it == bound_.end()) continue;
    const Node& n = nodes_[it->second];
    if (n.has_grad) p->grad.add_inplace(n.grad);
  }
}

namespace ad {

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

bool rg(Var v) { return v.tape().requires_grad(v.id()); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  Tensor out = cshot::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), rg(a) || rg(b), [ia, ib](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      const std::size_t m = av.rows(), k = av.cols();
      if (bv.rank() == 1) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) ga.at(i, p) += g[i] * bv[p];
      } else {
        const std::size_t n = bv.cols();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * bv.at(p, j);
            ga.at(i, p) += s;
          }
      }
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      const std::size_t m = av.rows(), k = av.cols();
      if (bv.rank() == 1) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) gb[p] += av.at(i, p) * g[i];
      } else {
        const std::size_t n = bv.cols();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av.at(i, p);
            for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += aip * g.at(i, j);
          }
      }
    }
  });
}

Var transpose(Var a) {
  Tape& t = a.tape();
  const std::size_t ia = a.id();
  return t.record(cshot::transpose(a.value()), rg(a), [ia](Tape& tp, const Tensor& g) {
    tp.add_grad(ia, cshot::transpose(g));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(elementwise(Binary::Add, a.value(), b.value()), rg(a) || rg(b),
                  [ia, ib](Tape& tp, const Tensor& g) {
                    tp.add_grad(ia, g);
                    tp.add_grad(ib, g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(elementwise(Binary::Sub, a.value(), b.value()), rg(a) || rg(b),
                  [ia, ib](Tape& tp, const Tensor& g) {
                    tp.add_grad(ia, g);
                    tp.add_grad(ib, cshot::scale(g, -1.0));
                  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(elementwise(Binary::Mul, a.value(), b.value()), rg(a) || rg(b),
                  [ia, ib](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia))
                      tp.add_grad(ia, elementwise(Binary::Mul, g, tp.value(ib)));
                    if (tp.requires_grad(ib))
                      tp.add_grad(ib, elementwise(Binary::Mul, g, tp.value(ia)));
                  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(cshot::scale(a.value(), s), rg(a), [ia, s](Tape& tp, const Tensor& g) {
    tp.add_grad(ia, cshot::scale(g, s));
  });
}

Var one_minus(Var a) {
  Tensor out = a.value();
  for (double& x : out.data()) x = 1.0 - x;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), rg(a), [ia](Tape& tp, const Tensor& g) {
    tp.add_grad(ia, cshot::scale(g, -1.0));
  });
}

Var scale_by(Var v, Var s) {
  Tape& t = same_tape(v, s);
  if (s.value().size() != 1) {
    throw DimensionError("scale_by: factor must hold one value, got " + shape_string(s.shape()));
  }
  const double k = s.value()[0];
  const std::size_t iv = v.id(), is = s.id();
  return t.record(cshot::scale(v.value(), k), rg(v) || rg(s),
                  [iv, is, k](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(iv)) tp.add_grad(iv, cshot::scale(g, k));
                    if (tp.requires_grad(is)) {
                      Tensor& gs = tp.grad_buffer(is);
                      gs[0] += dot(g.data(), tp.value(iv).data());
                    }
                  });
}

Var tanh(Var a) {
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  return a.tape().record(elementwise(Unary::Tanh, a.value()), rg(a),
                         [ia, self](Tape& tp, const Tensor& g) {
                           const Tensor& y = tp.value(self);
                           Tensor& ga = tp.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                         });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  return a.tape().record(elementwise(Unary::Sigmoid, a.value()), rg(a),
                         [ia, self](Tape& tp, const Tensor& g) {
                           const Tensor& y = tp.value(self);
                           Tensor& ga = tp.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
                         });
}

Var softmax(Var a) {
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  return a.tape().record(cshot::softmax(a.value()), rg(a), [ia, self](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(self);
    const double gy = dot(g.data(), y.data());
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (g[i] - gy);
  });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  const std::size_t ia = a.id();
  auto in_shape = a.shape();
  return a.tape().record(a.value().reshaped(std::move(shape)), rg(a),
                         [ia, in_shape](Tape& tp, const Tensor& g) {
                           tp.add_grad(ia, g.reshaped(in_shape));
                         });
}

Var concat(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.value().rank() != 1 || b.value().rank() != 1) {
    throw DimensionError("concat expects vectors, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t na = a.value().size();
  std::vector<double> data(a.value().values());
  data.insert(data.end(), b.value().values().begin(), b.value().values().end());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(Tensor::vector(std::move(data)), rg(a) || rg(b),
                  [ia, ib, na](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) {
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                    }
                    if (tp.requires_grad(ib)) {
                      Tensor& gb = tp.grad_buffer(ib);
                      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                    }
                  });
}

Var mean(std::span<const Var> xs) {
  if (xs.empty()) throw DomainError("mean of empty list");
  Tape& t = xs[0].tape();
  Tensor out = xs[0].value();
  bool any = rg(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    same_tape(xs[0], xs[i]);
    out.add_inplace(xs[i].value());
    any = any || rg(xs[i]);
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (double& x : out.data()) x *= inv;
  std::vector<std::size_t> ids;
  ids.reserve(xs.size());
  for (const Var& v : xs) ids.push_back(v.id());
  return t.record(std::move(out), any, [ids = std::move(ids), inv](Tape& tp, const Tensor& g) {
    const Tensor gi = cshot::scale(g, inv);
    for (std::size_t id : ids) tp.add_grad(id, gi);
  });
}

Var stack(std::span<const Var> scalars) {
  if (scalars.empty()) throw DomainError("stack of empty list");
  Tape& t = scalars[0].tape();
  std::vector<double> data;
  std::vector<std::size_t> ids;
  bool any = false;
  for (const Var& v : scalars) {
    same_tape(scalars[0], v);
    data.push_back(v.value().item());
    ids.push_back(v.id());
    any = any || rg(v);
  }
  return t.record(Tensor::vector(std::move(data)), any,
                  [ids = std::move(ids)](Tape& tp, const Tensor& g) {
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      if (tp.requires_grad(ids[i])) tp.grad_buffer(ids[i])[0] += g[i];
                    }
                  });
}

Var squared_distance(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw DimensionError("distance: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(Tensor::scalar(s), rg(a) || rg(b), [ia, ib](Tape& tp, const Tensor& g) {
    const Tensor diff = elementwise(Binary::Sub, tp.value(ia), tp.value(ib));
    const Tensor d = cshot::scale(diff, 2.0 * g[0]);
    tp.add_grad(ia, d);
    tp.add_grad(ib, cshot::scale(d, -1.0));
  });
}

Var euclidean_distance(Var a, Var b) {
  Tape& t = same_tape(a, b);
  Var sq = squared_distance(a, b);
  const double r = std::sqrt(sq.value()[0]);
  const std::size_t is = sq.id();
  return t.record(Tensor::scalar(r), rg(sq), [is, r](Tape& tp, const Tensor& g) {
    // d sqrt(s) / ds is unbounded at s = 0; the subgradient 0 is used there.
    if (r > 0.0) tp.grad_buffer(is)[0] += g[0] / (2.0 * r);
  });
}

Var sum_squares(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(a.value().squared_norm()), rg(a),
                         [ia](Tape& tp, const Tensor& g) {
                           tp.add_grad(ia, cshot::scale(tp.value(ia), 2.0 * g[0]));
                         });
}

Var cross_entropy(Var logits, std::size_t target) {
  const Tensor& z = logits.value();
  if (z.rank() != 1 || target >= z.size()) {
    throw DimensionError("cross_entropy: target " + std::to_string(target) +
                         " out of range for logits " + shape_string(z.shape()));
  }
  const Tensor logp = log_softmax(z);
  const std::size_t il = logits.id();
  return logits.tape().record(Tensor::scalar(-logp[target]), rg(logits),
                              [il, target](Tape& tp, const Tensor& g) {
                                Tensor p = cshot::softmax(tp.value(il));
                                p[target] -= 1.0;
                                tp.add_grad(il, cshot::scale(p, g[0]));
                              });
}

}  // namespace ad

}  // namespace cshot
