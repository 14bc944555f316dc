#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tdet/autodiff.hpp"
#include "tdet/tensor.hpp"

namespace tdet {

/// Gate order is fixed as input, forget, output, candidate. Checkpoints
/// store gate tensors in this order.
enum Gate : std::size_t { kInputGate = 0, kForgetGate, kOutputGate, kCandidate };
inline constexpr std::size_t kNumGates = 4;

/// Peephole-free ConvLSTM weights.
///   input kernels  W_g [F,C,k,k]
///   hidden kernels U_g [F,F,k,k]
///   biases         b_g [F]
struct ConvLSTMWeights {
  std::array<Tensor, kNumGates> input_kernels;
  std::array<Tensor, kNumGates> hidden_kernels;
  std::array<Tensor, kNumGates> biases;

  std::size_t filters() const { return biases[0].dim(0); }
  std::size_t in_channels() const { return input_kernels[0].dim(1); }
  std::size_t kernel_size() const { return input_kernels[0].dim(2); }

  /// Throws ShapeError unless every gate tensor is consistent and k is odd.
  void validate() const;

  /// All twelve tensors in checkpoint order: for each gate W, U, b.
  std::vector<const Tensor*> tensors() const;
  std::vector<Tensor*> tensors();
};

/// Uniform(-s, s), s = 1/sqrt(fan_in) for kernels and non-forget biases;
/// forget-gate bias is +1.
ConvLSTMWeights init_convlstm(std::size_t in_channels, std::size_t filters,
                              std::size_t kernel_size, std::mt19937_64& rng);

ConvLSTMWeights zero_convlstm(std::size_t in_channels, std::size_t filters,
                              std::size_t kernel_size);

struct ConvLSTMState {
  Tensor h;
  Tensor c;

  static ConvLSTMState zeros(std::size_t filters, std::size_t height,
                             std::size_t width);
};

/// One recurrence step:
///   i = σ(W_i*x + U_i*h + b_i)    f = σ(W_f*x + U_f*h + b_f)
///   o = σ(W_o*x + U_o*h + b_o)    g = tanh(W_g*x + U_g*h + b_g)
///   c' = f⊙c + i⊙g               h' = o⊙tanh(c')
/// Convolutions use "same" padding (k-1)/2.
ConvLSTMState convlstm_step(const Tensor& x, const ConvLSTMState& state,
                            const ConvLSTMWeights& w);

/// Folds convlstm_step over `features` starting from the zero state. The
/// spatial size of the zero state is taken from the first frame, or from
/// (height, width) when the sequence is empty.
ConvLSTMState encode_history(std::span<const Tensor> features,
                             const ConvLSTMWeights& w, std::size_t height,
                             std::size_t width);

/// Tape-recorded counterparts. Values are bit-identical to the pure path.
struct TapeConvLSTMWeights {
  std::array<Var, kNumGates> input_kernels;
  std::array<Var, kNumGates> hidden_kernels;
  std::array<Var, kNumGates> biases;
};

struct TapeConvLSTMState {
  Var h;
  Var c;
};

/// Registers the weights on the tape (trainable or constant).
TapeConvLSTMWeights record_weights(Tape& tape, const ConvLSTMWeights& w,
                                   bool trainable);

TapeConvLSTMState record_zero_state(Tape& tape, std::size_t filters,
                                    std::size_t height, std::size_t width);

TapeConvLSTMState convlstm_step(Tape& tape, Var x, const TapeConvLSTMState& s,
                                const TapeConvLSTMWeights& w,
                                std::size_t kernel_size);

/// Nodes added to a tape by one recorded convlstm_step.
inline constexpr std::size_t kNodesPerConvLSTMStep = 4 * 5 + 5;

}  // namespace tdet
