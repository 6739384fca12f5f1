#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "contextshot/tensor.hpp"

namespace cshot {

// A trainable tensor together with its gradient buffer. Gradients accumulate
// across every use inside one episode; callers zero them between episodes.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Linear reverse-mode tape. Nodes are appended in evaluation order, so a
// reverse sweep over the vector is a valid topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Binds a parameter as a leaf. Repeated binds of the same parameter return
  // the same node so its gradient sums over all uses.
  Var param(const Parameter& p);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient of the last backward() root w.r.t. the node; zeros if unreached.
  Tensor grad(Var v) const;
  Tensor gradient(const Parameter& p) const;

  void backward(Var loss);
  // Adds this tape's gradients into each parameter's grad buffer.
  void accumulate_grads(std::span<Parameter* const> params) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, bool requires_grad, Backward backward);
  void add_grad(std::size_t id, const Tensor& delta);
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);
// Multiplies every entry of v by the single value held in s (numel 1).
Var scale_by(Var v, Var s);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax(Var a);
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat(Var a, Var b);
Var mean(std::span<const Var> xs);
// Packs numel-1 nodes into a vector.
Var stack(std::span<const Var> scalars);
Var squared_distance(Var a, Var b);
Var euclidean_distance(Var a, Var b);
Var sum_squares(Var a);
// Fused log-softmax + negative log-likelihood of the target index.
Var cross_entropy(Var logits, std::size_t target);

}  // namespace ad

}  // namespace cshot
