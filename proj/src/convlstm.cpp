#include "tdet/convlstm.hpp"

#include <cmath>

namespace tdet {

void ConvLSTMWeights::validate() const {
  const std::size_t f = biases[0].rank() == 1 ? biases[0].dim(0) : 0;
  if (f == 0) throw ShapeError("convlstm: bias must be a non-empty vector");
  if (input_kernels[0].rank() != 4) {
    throw ShapeError("convlstm: input kernel must be rank 4");
  }
  const std::size_t c = input_kernels[0].dim(1);
  const std::size_t k = input_kernels[0].dim(2);
  if (k % 2 == 0) throw ShapeError("convlstm: kernel size must be odd");
  for (std::size_t g = 0; g < kNumGates; ++g) {
    if (input_kernels[g].shape() != Shape{f, c, k, k} ||
        hidden_kernels[g].shape() != Shape{f, f, k, k} ||
        biases[g].shape() != Shape{f}) {
      throw ShapeError("convlstm: inconsistent gate " + std::to_string(g) +
                       " tensors");
    }
  }
}

std::vector<const Tensor*> ConvLSTMWeights::tensors() const {
  std::vector<const Tensor*> out;
  for (std::size_t g = 0; g < kNumGates; ++g) {
    out.push_back(&input_kernels[g]);
    out.push_back(&hidden_kernels[g]);
    out.push_back(&biases[g]);
  }
  return out;
}

std::vector<Tensor*> ConvLSTMWeights::tensors() {
  std::vector<Tensor*> out;
  for (std::size_t g = 0; g < kNumGates; ++g) {
    out.push_back(&input_kernels[g]);
    out.push_back(&hidden_kernels[g]);
    out.push_back(&biases[g]);
  }
  return out;
}

ConvLSTMWeights zero_convlstm(std::size_t in_channels, std::size_t filters,
                              std::size_t kernel_size) {
  ConvLSTMWeights w;
  for (std::size_t g = 0; g < kNumGates; ++g) {
    w.input_kernels[g] = Tensor({filters, in_channels, kernel_size, kernel_size});
    w.hidden_kernels[g] = Tensor({filters, filters, kernel_size, kernel_size});
    w.biases[g] = Tensor({filters});
  }
  w.validate();
  return w;
}

ConvLSTMWeights init_convlstm(std::size_t in_channels, std::size_t filters,
                              std::size_t kernel_size, std::mt19937_64& rng) {
  ConvLSTMWeights w = zero_convlstm(in_channels, filters, kernel_size);
  const double fan_in =
      static_cast<double>((in_channels + filters) * kernel_size * kernel_size);
  const double s = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> u(-s, s);
  for (std::size_t g = 0; g < kNumGates; ++g) {
    for (double& v : w.input_kernels[g].data()) v = u(rng);
    for (double& v : w.hidden_kernels[g].data()) v = u(rng);
    if (g == kForgetGate) {
      for (double& v : w.biases[g].data()) v = 1.0;
    } else {
      for (double& v : w.biases[g].data()) v = u(rng);
    }
  }
  return w;
}

ConvLSTMState ConvLSTMState::zeros(std::size_t filters, std::size_t height,
                                   std::size_t width) {
  return {Tensor({filters, height, width}), Tensor({filters, height, width})};
}

namespace {

Tensor gate_preactivation(const Tensor& x, const Tensor& h,
                          const ConvLSTMWeights& w, std::size_t g) {
  const std::size_t pad = w.kernel_size() / 2;
  return add_channel_bias(
      elementwise(Binary::add, conv2d(x, w.input_kernels[g], 1, pad),
                  conv2d(h, w.hidden_kernels[g], 1, pad)),
      w.biases[g]);
}

}  // namespace

ConvLSTMState convlstm_step(const Tensor& x, const ConvLSTMState& state,
                            const ConvLSTMWeights& w) {
  if (x.rank() != 3 || state.h.rank() != 3 || x.dim(1) != state.h.dim(1) ||
      x.dim(2) != state.h.dim(2)) {
    throw ShapeError("convlstm_step: input " + shape_str(x.shape()) +
                     " does not match state " + shape_str(state.h.shape()));
  }
  if (state.h.shape() != state.c.shape() || state.h.dim(0) != w.filters()) {
    throw ShapeError("convlstm_step: state " + shape_str(state.h.shape()) +
                     " does not match " + std::to_string(w.filters()) +
                     " filters");
  }
  const Tensor i = elementwise(Unary::sigmoid, gate_preactivation(x, state.h, w, kInputGate));
  const Tensor f = elementwise(Unary::sigmoid, gate_preactivation(x, state.h, w, kForgetGate));
  const Tensor o = elementwise(Unary::sigmoid, gate_preactivation(x, state.h, w, kOutputGate));
  const Tensor g = elementwise(Unary::tanh, gate_preactivation(x, state.h, w, kCandidate));
  ConvLSTMState next;
  next.c = elementwise(Binary::add, elementwise(Binary::mul, f, state.c),
                       elementwise(Binary::mul, i, g));
  next.h = elementwise(Binary::mul, o, elementwise(Unary::tanh, next.c));
  return next;
}

ConvLSTMState encode_history(std::span<const Tensor> features,
                             const ConvLSTMWeights& w, std::size_t height,
                             std::size_t width) {
  if (!features.empty()) {
    if (features[0].rank() != 3) {
      throw ShapeError("encode_history: features must be [C,H,W]");
    }
    height = features[0].dim(1);
    width = features[0].dim(2);
  }
  ConvLSTMState state = ConvLSTMState::zeros(w.filters(), height, width);
  for (const Tensor& x : features) {
    if (x.shape() != features[0].shape()) {
      throw ShapeError("encode_history: frame shape " + shape_str(x.shape()) +
                       " differs from " + shape_str(features[0].shape()));
    }
    state = convlstm_step(x, state, w);
  }
  return state;
}

TapeConvLSTMWeights record_weights(Tape& tape, const ConvLSTMWeights& w,
                                   bool trainable) {
  auto rec = [&](const Tensor& t) {
    return trainable ? tape.trainable(t) : tape.constant(t);
  };
  TapeConvLSTMWeights out;
  for (std::size_t g = 0; g < kNumGates; ++g) {
    out.input_kernels[g] = rec(w.input_kernels[g]);
    out.hidden_kernels[g] = rec(w.hidden_kernels[g]);
    out.biases[g] = rec(w.biases[g]);
  }
  return out;
}

TapeConvLSTMState record_zero_state(Tape& tape, std::size_t filters,
                                    std::size_t height, std::size_t width) {
  return {tape.constant(Tensor({filters, height, width})),
          tape.constant(Tensor({filters, height, width}))};
}

TapeConvLSTMState convlstm_step(Tape& tape, Var x, const TapeConvLSTMState& s,
                                const TapeConvLSTMWeights& w,
                                std::size_t kernel_size) {
  const std::size_t pad = kernel_size / 2;
  auto pre = [&](std::size_t g) {
    return tape.add_channel_bias(
        tape.add(tape.conv2d(x, w.input_kernels[g], 1, pad),
                 tape.conv2d(s.h, w.hidden_kernels[g], 1, pad)),
        w.biases[g]);
  };
  const Var i = tape.sigmoid(pre(kInputGate));
  const Var f = tape.sigmoid(pre(kForgetGate));
  const Var o = tape.sigmoid(pre(kOutputGate));
  const Var g = tape.tanh(pre(kCandidate));
  TapeConvLSTMState next;
  next.c = tape.add(tape.mul(f, s.c), tape.mul(i, g));
  next.h = tape.mul(o, tape.tanh(next.c));
  return next;
}

}  // namespace tdet
