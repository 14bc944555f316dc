#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "tdet/autodiff.hpp"
#include "tdet/data.hpp"
#include "tdet/detector.hpp"

namespace tdet {

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossConfig {
  double lambda_coord = 5.0;
  double lambda_noobj = 0.5;
  double ignore_iou = 0.7;
};

struct LossResult {
  double value = 0.0;
  RawGrids grad;            // d(loss)/d(grid), one per scale
  std::size_t skipped = 0;  // gts whose responsible slot was already taken
};

/// YOLO-style loss. Each gt is assigned to the anchor (over all scales) with
/// the best shape IoU and to the cell containing its centre. That slot gets
/// lambda_coord * squared error on (σ(tx), σ(ty)) vs the fractional centre
/// and on (tw, th) vs log(gt/anchor), plus BCE towards objectness 1. Every
/// other slot gets lambda_noobj * BCE towards 0, unless its decoded box has
/// IoU > ignore_iou with some gt.
LossResult detection_loss(const RawGrids& grids, const std::vector<GroundTruth>& gt,
                          const DetectorConfig& config, const LossConfig& lc = {});

/// detection_loss as a single tape node over the grids of every scale.
Var record_detection_loss(Tape& tape, std::span<const Var> grids,
                          const std::vector<GroundTruth>& gt,
                          const DetectorConfig& config, const LossConfig& lc = {},
                          std::size_t* skipped = nullptr);

// ---------------------------------------------------------------------------
// Weakly supervised sequence sampling
// ---------------------------------------------------------------------------

/// A window of `length` frames from one video; only the frame at
/// `supervised` (relative to the window start) carries annotations. Frames
/// after it are never fed forward.
struct TrainingSample {
  std::size_t video = 0;
  std::size_t window_start = 0;
  std::size_t length = 1;
  std::size_t supervised = 0;
  bool flipped = false;
  std::vector<GroundTruth> gt;
};

/// One draw. Returns nullopt when the drawn window has no annotated frame;
/// callers resample.
std::optional<TrainingSample> sample_sequence(const std::vector<Video>& videos,
                                              std::size_t length, std::mt19937_64& rng);

/// Single-video form.
std::optional<TrainingSample> sample_sequence(const Video& video, std::size_t length,
                                              std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t seq_len = 8;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Steps per epoch; 0 means one step per training frame.
  std::size_t steps_per_epoch = 0;
  double flip_probability = 0.5;
  std::uint64_t seed = 1;
  LossConfig loss;

  void validate() const;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<StepRecord> trace;    // finite-loss steps only
  std::vector<double> epoch_loss;   // mean loss per epoch
  std::size_t skipped_steps = 0;    // non-finite losses
  std::size_t skipped_gt = 0;       // same-cell collisions
  std::size_t max_tape_nodes = 0;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Called after every epoch with the epoch index, its mean loss and the
/// current parameters.
using EpochCallback = std::function<void(std::size_t, double, const ModelParams&)>;

/// Nodes recorded for one step of a temporal model whose supervised frame
/// has `history` frames before it. Depends only on the head configuration,
/// never on backbone depth.
std::size_t expected_tape_nodes(std::size_t num_scales, std::size_t history);

/// Stateful Adam over a fixed list of tensors.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Trainable tensors of a temporal model in checkpoint order (ConvLSTM then
/// head, per scale).
std::vector<Tensor*> trainable_tensors(ModelParams& params);

/// Weakly supervised BPTT through the ConvLSTM and prediction layer. The
/// backbone is a frozen prefix: its features are computed once per frame
/// outside the tape, so its tensors receive no gradient and stay bitwise
/// unchanged.
TrainResult train(const std::vector<Video>& videos, const TrainConfig& config,
                  ModelParams params, const EpochCallback& on_epoch = {});

/// One step's loss and gradients for a sample (used by train and the
/// gradient checks).
struct StepOutput {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with trainable_tensors()
  std::size_t tape_nodes = 0;
  std::size_t skipped_gt = 0;
};
StepOutput sequence_step(const ModelParams& params, std::span<const Tensor> frames,
                         const std::vector<GroundTruth>& gt, const LossConfig& lc);

// ---------------------------------------------------------------------------
// Still-image pretraining of the base network (all layers trainable).
// ---------------------------------------------------------------------------

struct PretrainConfig {
  std::size_t steps = 40000;
  double learning_rate = 5e-4;
  /// Learning rate decays linearly to learning_rate * final_lr_fraction.
  double final_lr_fraction = 0.05;
  /// Only boxes at least this visible are annotated during pretraining.
  double min_visibility = 0.5;
  double flip_probability = 0.5;
  std::uint64_t seed = 1;
  LossConfig loss;
};

TrainResult pretrain_base(const std::vector<Video>& videos, const PretrainConfig& config,
                          ModelParams base);

/// Mirrors a frame and its boxes horizontally.
Tensor flip_frame(const Tensor& frame);
GroundTruth flip_gt(GroundTruth g, double image_width);

}  // namespace tdet
