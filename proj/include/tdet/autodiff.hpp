#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tdet/tensor.hpp"

namespace tdet {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

/// Gradients for the trainable leaves of a tape, indexed by leaf Var.
class Gradients {
 public:
  const Tensor& operator[](Var v) const;
  bool contains(Var v) const;
  std::size_t size() const noexcept { return count_; }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;  // indexed by node id; empty when absent
  std::vector<bool> present_;
  std::size_t count_ = 0;
};

/// Reverse-mode differentiation by recording operations in execution order.
///
/// Node ids are assigned in creation order, and an op can only consume
/// earlier nodes, so reverse id order is a valid topological order for the
/// backward sweep. Constants and frozen leaves never receive gradients, and
/// nodes depending only on them skip their backward closures entirely.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Var trainable(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var conv2d(Var x, Var kernels, std::size_t stride, std::size_t padding);
  Var add_channel_bias(Var x, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var leaky_relu(Var x);
  Var concat_channels(Var a, Var b);
  Var slice_channels(Var x, std::size_t begin, std::size_t end);
  Var sum(Var x);

  /// Records an op whose forward value was computed by the caller.
  /// `backward` receives d(loss)/d(output) and must call accumulate() for
  /// each input that requires a gradient.
  Var custom(std::vector<Var> inputs, Tensor value, BackwardFn backward);

  void accumulate(Var v, const Tensor& grad);

  /// d(loss)/d(leaf) for every trainable leaf. `loss` must hold one element.
  Gradients backward(Var loss);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool trainable_leaf = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn);
  bool any_requires(std::initializer_list<Var> vs) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

/// Central-difference gradient check over several inputs.
///
/// Returns max over all input elements of
///   |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
using MultiTapeFn = std::function<Var(Tape&, std::span<const Var>)>;
double grad_check(const MultiTapeFn& f, const std::vector<Tensor>& inputs,
                  double eps);

using TapeFn = std::function<Var(Tape&, Var)>;
double grad_check(const TapeFn& f, const Tensor& x, double eps);

}  // namespace tdet
