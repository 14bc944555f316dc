#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "tdet/autodiff.hpp"
#include "tdet/box.hpp"
#include "tdet/convlstm.hpp"
#include "tdet/tensor.hpp"

namespace tdet {

struct Anchor {
  double w = 24.0;
  double h = 24.0;
  friend bool operator==(const Anchor&, const Anchor&) = default;
};

/// One detection scale taps the output of backbone layer `layer`.
struct ScaleConfig {
  std::size_t layer = 3;
  std::vector<Anchor> anchors{Anchor{}};
  friend bool operator==(const ScaleConfig&, const ScaleConfig&) = default;
};

/// Toy backbone geometry. Every backbone layer is conv(k, pad k/2) + bias +
/// leaky ReLU; a scale's prediction layer is a 1x1 conv.
struct DetectorConfig {
  std::size_t input_size = 64;
  std::vector<std::size_t> channels{8, 16, 32, 32};
  std::vector<std::size_t> strides{2, 2, 2, 2};
  std::size_t kernel_size = 3;
  std::size_t lstm_kernel = 3;
  std::vector<ScaleConfig> scales{ScaleConfig{}};

  void validate() const;
  /// Spatial size of backbone layer `layer`'s output.
  std::size_t layer_size(std::size_t layer) const;
  std::size_t grid_size(std::size_t scale) const;
  double stride_px(std::size_t scale) const;
  std::size_t encoded_channels(std::size_t scale) const;

  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

struct ConvLayer {
  Tensor kernels;  // [Cout, Cin, k, k]
  Tensor bias;     // [Cout]
  bool frozen = false;
};

/// Prediction layer of one scale. Base networks carry no ConvLSTM and a head
/// over C channels; temporal networks carry one and a head over 2C channels
/// (current features first, then the history encoding).
struct ScaleHead {
  std::optional<ConvLSTMWeights> lstm;
  Tensor kernels;  // [A*5, C or 2C, 1, 1]
  Tensor bias;     // [A*5]
};

struct ModelParams {
  DetectorConfig config;
  std::vector<ConvLayer> backbone;
  std::vector<ScaleHead> heads;

  bool temporal() const;
  /// Shape checks, including the head width contract: 2C input channels
  /// for temporal heads, C for base heads.
  void validate() const;
};

/// Per anchor: tx, ty, tw, th, objectness logit. Channel a*5+k.
inline constexpr std::size_t kBoxFields = 5;

/// Raw prediction grids of every scale for one frame, each [A*5, S, S].
using RawGrids = std::vector<Tensor>;

enum class Mode { plain, sequenced };

ModelParams init_base_model(const DetectorConfig& config, std::mt19937_64& rng);

/// Output of every backbone layer.
std::vector<Tensor> backbone_outputs(const Tensor& frame,
                                     const ModelParams& params);

/// Encoded-layer feature map of each scale.
std::vector<Tensor> backbone_features(const Tensor& frame,
                                      const ModelParams& params);

/// Prediction layer on current features plus (for temporal heads) the
/// history encoding.
Tensor head_forward(const ScaleHead& head, const Tensor& features,
                    const Tensor* history);

/// Base (non-temporal) network on one frame.
RawGrids base_forward(const Tensor& frame, const ModelParams& base);

/// Prediction for the last frame of `frames`. Plain mode forces the history
/// encoding to the zero state; sequenced mode encodes frames [0, T-1).
RawGrids forward(std::span<const Tensor> frames, Mode mode,
                 const ModelParams& params);

/// Streams frames of one video in order and predicts each from the frames
/// before it. Owns the recurrent state; not shareable across streams.
class SequenceRunner {
 public:
  SequenceRunner(const ModelParams& params, Mode mode);
  RawGrids step(const Tensor& frame);
  void reset();

 private:
  const ModelParams* params_;
  Mode mode_;
  std::vector<ConvLSTMState> states_;
};

/// Widens a base network into a temporal one. Backbone copied and frozen;
/// each head gains C zero-initialised input channels for the history
/// encoding, so the result reproduces the base network while h contributes
/// nothing.
ModelParams transfer_weights(const ModelParams& base, std::uint64_t init_seed);

struct Detection {
  BBox box;
  double confidence = 0.0;
  int frame_index = 0;
  std::size_t cell_index = 0;  // deterministic tie-break key
};

/// Grid decode. Keeps entries with confidence >= conf_threshold; a
/// confidence of exactly 0 is never a detection.
std::vector<Detection> decode(const Tensor& grid, std::span<const Anchor> anchors,
                              double conf_threshold, std::size_t input_size,
                              int frame_index = 0, std::size_t cell_offset = 0);

/// Decode across every scale of a model.
std::vector<Detection> decode_all(const RawGrids& grids,
                                  const DetectorConfig& config,
                                  double conf_threshold, int frame_index = 0);

/// Strict ordering used for ranking: confidence descending, then cell
/// index, frame and box coordinates ascending.
bool rank_before(const Detection& a, const Detection& b);

/// Greedy NMS; suppresses boxes with IoU > iou_threshold against a kept box.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

// ---------------------------------------------------------------------------
// Tape path used by training. Backbone features come in as constants.
// ---------------------------------------------------------------------------

struct TapeConvLayer {
  Var kernels;
  Var bias;
};

std::vector<TapeConvLayer> record_backbone(Tape& tape, const ModelParams& params,
                                           bool trainable);

/// Encoded-layer features of each scale, computed on the tape.
std::vector<Var> record_backbone_features(Tape& tape, Var frame,
                                          std::span<const TapeConvLayer> layers,
                                          const DetectorConfig& config);

struct TapeScaleHead {
  std::optional<TapeConvLSTMWeights> lstm;
  Var kernels;
  Var bias;
};

std::vector<TapeScaleHead> record_heads(Tape& tape, const ModelParams& params);

/// Sequenced forward of one scale on the tape: history over
/// `features[0..n-1)`, prediction on `features[n-1]`.
Var record_scale_forward(Tape& tape, const TapeScaleHead& head,
                         std::span<const Var> features,
                         std::size_t lstm_kernel);

}  // namespace tdet
