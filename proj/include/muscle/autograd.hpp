// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation on an explicit tape.
//
// A Tape records every operation in execution order, so its node list is
// topologically sorted by construction. Leaves are registered with
// `Tape::leaf`; ops are free functions taking and returning `Var` handles.
// `Tape::backward` may run once per tape.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "muscle/tensor.hpp"

namespace muscle {

class Tape;

/// Handle to one node of a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called with the tape and the id of the node being back-propagated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op node. The node requires grad iff any input does; `fn` is
  /// dropped otherwise.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  void backward(Var root);
  bool backward_done() const noexcept { return done_; }

  /// Gradient of the backward root w.r.t. `v`; zeros for nodes the root does
  /// not depend on.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::span<const double> grad_of(std::size_t id) const { return nodes_[id].grad; }
  /// Accumulation target for backward rules. Empty if `id` needs no grad.
  std::span<double> grad_buffer(std::size_t id) { return nodes_[id].grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::vector<double> grad;
  };
  std::vector<Node> nodes_;
  bool done_ = false;
};

// Differentiable operations. Operands must live on the same tape.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);
Var relu(Var x);
Var reshape(Var x, Shape shape);

/// Cross-correlation of a C_in×H×W input with C_out×C_in×kh×kw kernels.
Var conv2d(Var input, Var kernels, std::size_t stride, std::size_t pad);
/// x[C×H×W] + b[C] broadcast over the spatial dims.
Var add_channel_bias(Var x, Var bias);
/// C×H×W -> 1×C spatial mean.
Var global_avg_pool(Var x);
/// C×h×w -> C×H×W, source index floor(i·h/H).
Var upsample_nearest(Var x, std::size_t out_h, std::size_t out_w);
/// x / ‖x‖₂ over all elements.
Var l2_normalize(Var x);

/// Mean over rows of −log softmax(logits)[label]; logits are B×C.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
/// Mean over pixels of per-pixel softmax cross-entropy; logits L×H×W,
/// labels H·W row-major.
Var pixel_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace muscle
