#include "tdet/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace tdet {

const Tensor& Gradients::operator[](Var v) const {
  if (!contains(v)) {
    throw ContractError("no gradient recorded for node " + std::to_string(v.id));
  }
  return grads_[v.id];
}

bool Gradients::contains(Var v) const {
  return v.id < present_.size() && present_[v.id];
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), requires_grad, false,
                        requires_grad ? std::move(fn) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

bool Tape::any_requires(std::initializer_list<Var> vs) const {
  return std::any_of(vs.begin(), vs.end(),
                     [this](Var v) { return nodes_.at(v.id).requires_grad; });
}

Var Tape::trainable(Tensor value) {
  Var v = push(std::move(value), true, {});
  nodes_.back().trainable_leaf = true;
  return v;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

void Tape::accumulate(Var v, const Tensor& grad) {
  if (!nodes_.at(v.id).requires_grad) return;
  Tensor& slot = grads_.at(v.id);
  if (!has_grad_[v.id]) {
    slot = grad;
    has_grad_[v.id] = true;
    return;
  }
  if (slot.shape() != grad.shape()) {
    throw ShapeError("gradient shape mismatch at node " + std::to_string(v.id));
  }
  double* s = slot.raw();
  const double* g = grad.raw();
  for (std::size_t i = 0; i < slot.size(); ++i) s[i] += g[i];
}

Var Tape::conv2d(Var x, Var kernels, std::size_t stride, std::size_t padding) {
  Tensor out = tdet::conv2d(value(x), value(kernels), stride, padding);
  return push(std::move(out), any_requires({x, kernels}),
              [x, kernels, stride, padding](Tape& t, const Tensor& g) {
                const bool gx = t.requires_grad(x);
                const bool gk = t.requires_grad(kernels);
                Tensor dx, dk;
                conv2d_backward(t.value(x), t.value(kernels), stride, padding,
                                g, gx ? &dx : nullptr, gk ? &dk : nullptr);
                if (gx) t.accumulate(x, dx);
                if (gk) t.accumulate(kernels, dk);
              });
}

Var Tape::add_channel_bias(Var x, Var bias) {
  Tensor out = tdet::add_channel_bias(value(x), value(bias));
  return push(std::move(out), any_requires({x, bias}),
              [x, bias](Tape& t, const Tensor& g) {
                t.accumulate(x, g);
                if (!t.requires_grad(bias)) return;
                const std::size_t c = g.dim(0);
                const std::size_t plane = g.dim(1) * g.dim(2);
                Tensor db({c});
                for (std::size_t k = 0; k < c; ++k) {
                  double s = 0.0;
                  for (std::size_t i = 0; i < plane; ++i) s += g[k * plane + i];
                  db[k] = s;
                }
                t.accumulate(bias, db);
              });
}

Var Tape::add(Var a, Var b) {
  Tensor out = elementwise(Binary::add, value(a), value(b));
  return push(std::move(out), any_requires({a, b}),
              [a, b](Tape& t, const Tensor& g) {
                t.accumulate(a, g);
                t.accumulate(b, g);
              });
}

Var Tape::sub(Var a, Var b) {
  Tensor out = elementwise(Binary::sub, value(a), value(b));
  return push(std::move(out), any_requires({a, b}),
              [a, b](Tape& t, const Tensor& g) {
                t.accumulate(a, g);
                if (t.requires_grad(b)) {
                  Tensor neg = g;
                  for (double& v : neg.data()) v = -v;
                  t.accumulate(b, neg);
                }
              });
}

Var Tape::mul(Var a, Var b) {
  Tensor out = elementwise(Binary::mul, value(a), value(b));
  return push(std::move(out), any_requires({a, b}),
              [a, b](Tape& t, const Tensor& g) {
                if (t.requires_grad(a)) {
                  t.accumulate(a, elementwise(Binary::mul, g, t.value(b)));
                }
                if (t.requires_grad(b)) {
                  t.accumulate(b, elementwise(Binary::mul, g, t.value(a)));
                }
              });
}

Var Tape::sigmoid(Var x) {
  Tensor out = elementwise(Unary::sigmoid, value(x));
  const std::size_t self = nodes_.size();
  return push(std::move(out), any_requires({x}),
              [x, self](Tape& t, const Tensor& g) {
                const Tensor& y = t.value(Var{self});
                Tensor d(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) {
                  d[i] = g[i] * y[i] * (1.0 - y[i]);
                }
                t.accumulate(x, d);
              });
}

Var Tape::tanh(Var x) {
  Tensor out = elementwise(Unary::tanh, value(x));
  const std::size_t self = nodes_.size();
  return push(std::move(out), any_requires({x}),
              [x, self](Tape& t, const Tensor& g) {
                const Tensor& y = t.value(Var{self});
                Tensor d(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) {
                  d[i] = g[i] * (1.0 - y[i] * y[i]);
                }
                t.accumulate(x, d);
              });
}

Var Tape::leaky_relu(Var x) {
  Tensor out = elementwise(Unary::leaky_relu, value(x));
  return push(std::move(out), any_requires({x}),
              [x](Tape& t, const Tensor& g) {
                const Tensor& in = t.value(x);
                Tensor d(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) {
                  d[i] = in[i] > 0.0 ? g[i] : kLeakySlope * g[i];
                }
                t.accumulate(x, d);
              });
}

Var Tape::concat_channels(Var a, Var b) {
  Tensor out = tdet::concat_channels(value(a), value(b));
  const std::size_t ca = value(a).dim(0);
  return push(std::move(out), any_requires({a, b}),
              [a, b, ca](Tape& t, const Tensor& g) {
                if (t.requires_grad(a)) t.accumulate(a, tdet::slice_channels(g, 0, ca));
                if (t.requires_grad(b)) {
                  t.accumulate(b, tdet::slice_channels(g, ca, g.dim(0)));
                }
              });
}

Var Tape::slice_channels(Var x, std::size_t begin, std::size_t end) {
  Tensor out = tdet::slice_channels(value(x), begin, end);
  return push(std::move(out), any_requires({x}),
              [x, begin](Tape& t, const Tensor& g) {
                Tensor d(t.value(x).shape());
                const std::size_t plane = g.dim(1) * g.dim(2);
                std::copy(g.data().begin(), g.data().end(),
                          d.raw() + begin * plane);
                t.accumulate(x, d);
              });
}

Var Tape::sum(Var x) {
  Tensor out = Tensor::scalar(tdet::sum(value(x)));
  return push(std::move(out), any_requires({x}),
              [x](Tape& t, const Tensor& g) {
                t.accumulate(x, Tensor(t.value(x).shape(), g[0]));
              });
}

Var Tape::custom(std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  bool req = false;
  for (Var v : inputs) req = req || nodes_.at(v.id).requires_grad;
  return push(std::move(value), req, std::move(backward));
}

Gradients Tape::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(value(loss).shape()));
  }
  grads_.assign(nodes_.size(), Tensor{});
  has_grad_.assign(nodes_.size(), false);
  accumulate(loss, Tensor(value(loss).shape(), 1.0));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    if (!has_grad_[i]) continue;  // not on a path to the loss
    n.backward(*this, grads_[i]);
  }
  Gradients out;
  out.grads_.resize(nodes_.size());
  out.present_.assign(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].trainable_leaf) continue;
    out.grads_[i] = has_grad_[i] ? std::move(grads_[i])
                                 : Tensor(nodes_[i].value.shape());
    out.present_[i] = true;
    ++out.count_;
  }
  grads_.clear();
  has_grad_.clear();
  return out;
}

double grad_check(const MultiTapeFn& f, const std::vector<Tensor>& inputs,
                  double eps) {
  auto evaluate = [&f](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    return tape.value(f(tape, vars)).item();
  };

  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.trainable(x));
  const Gradients grads = tape.backward(f(tape, vars));

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = grads[vars[k]];
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + eps;
      const double up = evaluate(probe);
      probe[k][i] = orig - eps;
      const double down = evaluate(probe);
      probe[k][i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i];
      const double err =
          std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double grad_check(const TapeFn& f, const Tensor& x, double eps) {
  return grad_check(
      MultiTapeFn([&f](Tape& t, std::span<const Var> v) { return f(t, v[0]); }),
      std::vector<Tensor>{x}, eps);
}

}  // namespace tdet
