#include "tdet/trainer.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

namespace tdet {

namespace {

struct Assignment {
  std::size_t scale, anchor, i, j;
  double tx, ty, tw, th;
};

double shape_iou(double w0, double h0, double w1, double h1) {
  const double inter = std::min(w0, w1) * std::min(h0, h1);
  return inter / (w0 * h0 + w1 * h1 - inter);
}

std::vector<Assignment> assign_targets(const std::vector<GroundTruth>& gt,
                                       const DetectorConfig& config,
                                       std::size_t& skipped) {
  std::vector<Assignment> out;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> taken;
  for (const auto& g : gt) {
    std::size_t best_s = 0, best_a = 0;
    double best = -1.0;
    for (std::size_t s = 0; s < config.scales.size(); ++s) {
      const auto& anchors = config.scales[s].anchors;
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        const double v = shape_iou(g.box.w, g.box.h, anchors[a].w, anchors[a].h);
        if (v > best) {
          best = v;
          best_s = s;
          best_a = a;
        }
      }
    }
    const double stride = config.stride_px(best_s);
    const auto n = static_cast<double>(config.grid_size(best_s));
    const double gx = g.box.center_x() / stride;
    const double gy = g.box.center_y() / stride;
    const double j = std::clamp(std::floor(gx), 0.0, n - 1.0);
    const double i = std::clamp(std::floor(gy), 0.0, n - 1.0);
    const auto key = std::make_tuple(best_s, best_a, static_cast<std::size_t>(i),
                                     static_cast<std::size_t>(j));
    if (!taken.insert(key).second) {
      ++skipped;
      continue;
    }
    const Anchor& anc = config.scales[best_s].anchors[best_a];
    out.push_back(Assignment{best_s, best_a, static_cast<std::size_t>(i),
                             static_cast<std::size_t>(j), std::clamp(gx - j, 0.0, 1.0),
                             std::clamp(gy - i, 0.0, 1.0), std::log(g.box.w / anc.w),
                             std::log(g.box.h / anc.h)});
  }
  return out;
}

}  // namespace

LossResult detection_loss(const RawGrids& grids, const std::vector<GroundTruth>& gt,
                          const DetectorConfig& config, const LossConfig& lc) {
  if (grids.size() != config.scales.size()) {
    throw ShapeError("detection_loss: grid count does not match scales");
  }
  LossResult res;
  const auto targets = assign_targets(gt, config, res.skipped);
  // responsible[(scale, anchor, i, j)] -> target index
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, std::size_t>
      responsible;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& t = targets[k];
    responsible[{t.scale, t.anchor, t.i, t.j}] = k;
  }

  double loss = 0.0;
  for (std::size_t s = 0; s < grids.size(); ++s) {
    const Tensor& grid = grids[s];
    const auto& anchors = config.scales[s].anchors;
    const std::size_t n = config.grid_size(s);
    if (grid.shape() != Shape{anchors.size() * kBoxFields, n, n}) {
      throw ShapeError("detection_loss: grid " + shape_str(grid.shape()));
    }
    const double stride = config.stride_px(s);
    Tensor grad(grid.shape());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t a = 0; a < anchors.size(); ++a) {
          const std::size_t ch = a * kBoxFields;
          const double z = grid.at(ch + 4, i, j);
          const auto it = responsible.find({s, a, i, j});
          if (it != responsible.end()) {
            const auto& t = targets[it->second];
            const double sx = sigmoid(grid.at(ch, i, j));
            const double sy = sigmoid(grid.at(ch + 1, i, j));
            const double dw = grid.at(ch + 2, i, j) - t.tw;
            const double dh = grid.at(ch + 3, i, j) - t.th;
            loss += lc.lambda_coord * ((sx - t.tx) * (sx - t.tx) + (sy - t.ty) * (sy - t.ty) +
                                       dw * dw + dh * dh);
            loss += softplus(-z);
            grad.at(ch, i, j) = 2.0 * lc.lambda_coord * (sx - t.tx) * sx * (1.0 - sx);
            grad.at(ch + 1, i, j) = 2.0 * lc.lambda_coord * (sy - t.ty) * sy * (1.0 - sy);
            grad.at(ch + 2, i, j) = 2.0 * lc.lambda_coord * dw;
            grad.at(ch + 3, i, j) = 2.0 * lc.lambda_coord * dh;
            grad.at(ch + 4, i, j) = sigmoid(z) - 1.0;
            continue;
          }
          const BBox box = BBox::from_center(
              (static_cast<double>(j) + sigmoid(grid.at(ch, i, j))) * stride,
              (static_cast<double>(i) + sigmoid(grid.at(ch + 1, i, j))) * stride,
              anchors[a].w * std::exp(grid.at(ch + 2, i, j)),
              anchors[a].h * std::exp(grid.at(ch + 3, i, j)));
          const bool ignored = std::any_of(gt.begin(), gt.end(), [&](const GroundTruth& g) {
            return iou(box, g.box) > lc.ignore_iou;
          });
          if (ignored) continue;
          loss += lc.lambda_noobj * softplus(z);
          grad.at(ch + 4, i, j) = lc.lambda_noobj * sigmoid(z);
        }
      }
    }
    res.grad.push_back(std::move(grad));
  }
  res.value = loss;
  return res;
}

Var record_detection_loss(Tape& tape, std::span<const Var> grids,
                          const std::vector<GroundTruth>& gt, const DetectorConfig& config,
                          const LossConfig& lc, std::size_t* skipped) {
  RawGrids values;
  for (Var g : grids) values.push_back(tape.value(g));
  LossResult res = detection_loss(values, gt, config, lc);
  if (skipped) *skipped = res.skipped;
  std::vector<Var> inputs(grids.begin(), grids.end());
  return tape.custom(inputs, Tensor::scalar(res.value),
                     [inputs, grad = std::move(res.grad)](Tape& t, const Tensor& g) {
                       for (std::size_t s = 0; s < inputs.size(); ++s) {
                         Tensor d = grad[s];
                         for (double& v : d.data()) v *= g[0];
                         t.accumulate(inputs[s], d);
                       }
                     });
}

// ---------------------------------------------------------------------------

std::optional<TrainingSample> sample_sequence(const std::vector<Video>& videos,
                                              std::size_t length, std::mt19937_64& rng) {
  if (length == 0) throw ContractError("sample_sequence: length must be >= 1");
  std::vector<double> weights;
  for (const auto& v : videos) {
    weights.push_back(v.num_frames() >= length
                          ? static_cast<double>(v.num_frames() - length + 1)
                          : 0.0);
  }
  if (std::none_of(weights.begin(), weights.end(), [](double w) { return w > 0.0; })) {
    throw ContractError("sample_sequence: no video has " + std::to_string(length) +
                        " frames");
  }
  const std::size_t vi = std::discrete_distribution<std::size_t>(weights.begin(),
                                                                  weights.end())(rng);
  auto s = sample_sequence(videos[vi], length, rng);
  if (s) s->video = vi;
  return s;
}

std::optional<TrainingSample> sample_sequence(const Video& video, std::size_t length,
                                              std::mt19937_64& rng) {
  if (length == 0) throw ContractError("sample_sequence: length must be >= 1");
  if (video.num_frames() < length) {
    throw ContractError("sample_sequence: video " + video.name + " shorter than window");
  }
  const std::size_t start = std::uniform_int_distribution<std::size_t>(
      0, video.num_frames() - length)(rng);
  std::vector<bool> annotated(length, false);
  for (const auto& g : video.gt) {
    const long rel = static_cast<long>(g.frame_index) - static_cast<long>(start);
    if (rel >= 0 && rel < static_cast<long>(length)) annotated[rel] = true;
  }
  std::vector<std::size_t> positions;
  for (std::size_t k = 0; k < length; ++k) {
    if (annotated[k]) positions.push_back(k);
  }
  if (positions.empty()) return std::nullopt;
  const std::size_t pick =
      std::uniform_int_distribution<std::size_t>(0, positions.size() - 1)(rng);
  TrainingSample out;
  out.window_start = start;
  out.length = length;
  out.supervised = positions[pick];
  const int frame = static_cast<int>(start + out.supervised);
  for (const auto& g : video.gt) {
    if (g.frame_index == frame) out.gt.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (seq_len < 1) throw ContractError("train: seq_len must be >= 1");
  if (epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw ContractError("train: learning rate must be >= 0");
  if (flip_probability < 0.0 || flip_probability > 1.0) {
    throw ContractError("train: flip probability outside [0,1]");
  }
}

std::size_t expected_tape_nodes(std::size_t num_scales, std::size_t history) {
  // Per scale: 12 ConvLSTM leaves + 2 head leaves, history+1 feature
  // constants, zero h and c, kNodesPerConvLSTMStep per history frame, then
  // concat, 1x1 conv and bias. One loss node overall.
  return num_scales * (12 + 2 + (history + 1) + 2 + kNodesPerConvLSTMStep * history + 3) + 1;
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size()) throw ContractError("adam: params/grads mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<Tensor*> trainable_tensors(ModelParams& params) {
  std::vector<Tensor*> out;
  for (auto& h : params.heads) {
    if (h.lstm) {
      for (Tensor* t : h.lstm->tensors()) out.push_back(t);
    }
    out.push_back(&h.kernels);
    out.push_back(&h.bias);
  }
  return out;
}

namespace {

// features[s][t] for the frames of one window prefix.
StepOutput feature_step(const ModelParams& params,
                        const std::vector<std::vector<const Tensor*>>& features,
                        const std::vector<GroundTruth>& gt, const LossConfig& lc) {
  Tape tape;
  const auto heads = record_heads(tape, params);
  std::vector<std::vector<Var>> feats(features.size());
  for (std::size_t s = 0; s < features.size(); ++s) {
    for (const Tensor* f : features[s]) feats[s].push_back(tape.constant(*f));
  }
  std::vector<Var> grids;
  for (std::size_t s = 0; s < heads.size(); ++s) {
    grids.push_back(record_scale_forward(tape, heads[s], feats[s], params.config.lstm_kernel));
  }
  StepOutput out;
  const Var loss = record_detection_loss(tape, grids, gt, params.config, lc, &out.skipped_gt);
  out.loss = tape.value(loss).item();
  out.tape_nodes = tape.node_count();
  if (!std::isfinite(out.loss)) return out;
  const Gradients g = tape.backward(loss);
  for (const auto& h : heads) {
    if (h.lstm) {
      for (std::size_t k = 0; k < kNumGates; ++k) {
        out.grads.push_back(g[h.lstm->input_kernels[k]]);
        out.grads.push_back(g[h.lstm->hidden_kernels[k]]);
        out.grads.push_back(g[h.lstm->biases[k]]);
      }
    }
    out.grads.push_back(g[h.kernels]);
    out.grads.push_back(g[h.bias]);
  }
  return out;
}

}  // namespace

StepOutput sequence_step(const ModelParams& params, std::span<const Tensor> frames,
                         const std::vector<GroundTruth>& gt, const LossConfig& lc) {
  if (frames.empty()) throw ContractError("sequence_step: no frames");
  std::vector<std::vector<Tensor>> store(params.heads.size());
  for (const auto& f : frames) {
    auto taps = backbone_features(f, params);
    for (std::size_t s = 0; s < taps.size(); ++s) store[s].push_back(std::move(taps[s]));
  }
  std::vector<std::vector<const Tensor*>> ptrs(store.size());
  for (std::size_t s = 0; s < store.size(); ++s) {
    for (const auto& t : store[s]) ptrs[s].push_back(&t);
  }
  return feature_step(params, ptrs, gt, lc);
}

Tensor flip_frame(const Tensor& frame) {
  Tensor out(frame.shape());
  const std::size_t w = frame.dim(2);
  for (std::size_t c = 0; c < frame.dim(0); ++c) {
    for (std::size_t y = 0; y < frame.dim(1); ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = frame.at(c, y, w - 1 - x);
    }
  }
  return out;
}

GroundTruth flip_gt(GroundTruth g, double image_width) {
  g.box.x = image_width - g.box.x - g.box.w;
  return g;
}

TrainResult train(const std::vector<Video>& videos, const TrainConfig& config,
                  ModelParams params, const EpochCallback& on_epoch) {
  config.validate();
  params.validate();
  if (!params.temporal()) {
    throw ContractError("train: expects a temporal model from transfer_weights");
  }
  for (const auto& v : videos) {
    for (const auto& f : v.frames) {
      if (f.empty()) throw ContractError("train: video " + v.name + " has no pixel data");
    }
  }

  std::size_t steps_per_epoch = config.steps_per_epoch;
  if (steps_per_epoch == 0) {
    std::size_t frames = 0;
    for (const auto& v : videos) frames += v.num_frames();
    steps_per_epoch = std::max<std::size_t>(1, frames);
  }

  // Frozen prefix: features are computed once per (video, frame, flip) and
  // never enter the tape.
  std::vector<std::vector<std::array<std::optional<std::vector<Tensor>>, 2>>> cache(
      videos.size());
  for (std::size_t v = 0; v < videos.size(); ++v) cache[v].resize(videos[v].num_frames());
  auto features_of = [&](std::size_t v, std::size_t t, bool flip) -> const std::vector<Tensor>& {
    auto& slot = cache[v][t][flip ? 1 : 0];
    if (!slot) {
      slot = flip ? backbone_features(flip_frame(videos[v].frames[t]), params)
                  : backbone_features(videos[v].frames[t], params);
    }
    return *slot;
  };

  Adam adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TrainResult result;
  const double width = static_cast<double>(params.config.input_size);
  std::size_t consecutive_bad = 0;
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_sum = 0.0;
    std::size_t epoch_n = 0;
    for (std::size_t k = 0; k < steps_per_epoch; ++k, ++global_step) {
      std::optional<TrainingSample> sample;
      for (int attempt = 0; attempt < 10000 && !sample; ++attempt) {
        sample = sample_sequence(videos, config.seq_len, rng);
      }
      if (!sample) throw TrainingAborted("train: no annotated window found in 10000 draws");
      sample->flipped = unit(rng) < config.flip_probability;
      if (sample->flipped) {
        for (auto& g : sample->gt) g = flip_gt(g, width);
      }

      std::vector<std::vector<const Tensor*>> feats(params.heads.size());
      for (std::size_t t = 0; t <= sample->supervised; ++t) {
        const auto& taps = features_of(sample->video, sample->window_start + t, sample->flipped);
        for (std::size_t s = 0; s < taps.size(); ++s) feats[s].push_back(&taps[s]);
      }
      StepOutput out = feature_step(params, feats, sample->gt, config.loss);
      result.max_tape_nodes = std::max(result.max_tape_nodes, out.tape_nodes);
      result.skipped_gt += out.skipped_gt;
      if (!std::isfinite(out.loss)) {
        ++result.skipped_steps;
        if (++consecutive_bad >= 3) {
          std::ostringstream os;
          os << "train: three consecutive non-finite losses (epoch " << epoch << ", step "
             << global_step << ", video " << sample->video << ", window "
             << sample->window_start << ", supervised " << sample->supervised << ")";
          throw TrainingAborted(os.str());
        }
        continue;
      }
      consecutive_bad = 0;
      std::vector<Tensor*> ps = trainable_tensors(params);
      std::vector<const Tensor*> gs;
      for (const auto& g : out.grads) gs.push_back(&g);
      adam.step(ps, gs);
      result.trace.push_back({epoch, global_step, out.loss});
      epoch_sum += out.loss;
      ++epoch_n;
    }
    result.epoch_loss.push_back(epoch_n ? epoch_sum / static_cast<double>(epoch_n) : 0.0);
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back(), params);
  }
  result.params = std::move(params);
  return result;
}

TrainResult pretrain_base(const std::vector<Video>& videos, const PretrainConfig& config,
                          ModelParams base) {
  base.validate();
  if (base.temporal()) throw ContractError("pretrain_base: expects a base model");
  std::vector<std::pair<std::size_t, std::size_t>> frames;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    for (std::size_t t = 0; t < videos[v].num_frames(); ++t) {
      if (videos[v].frames[t].empty()) {
        throw ContractError("pretrain_base: video " + videos[v].name + " has no pixel data");
      }
      frames.emplace_back(v, t);
    }
  }
  if (frames.empty()) throw ContractError("pretrain_base: no frames");
  std::vector<std::vector<std::vector<GroundTruth>>> by_frame;
  for (const auto& v : videos) by_frame.push_back(v.gt_by_frame());

  Adam adam(config.learning_rate, 0.9, 0.999, 1e-8);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, frames.size() - 1);
  const double width = static_cast<double>(base.config.input_size);
  TrainResult result;
  double sum = 0.0;
  std::size_t consecutive_bad = 0;

  for (std::size_t step = 0; step < config.steps; ++step) {
    const double progress = static_cast<double>(step) / static_cast<double>(config.steps);
    adam.set_learning_rate(config.learning_rate *
                           (1.0 - progress * (1.0 - config.final_lr_fraction)));
    const auto [v, t] = frames[pick(rng)];
    const bool flip = unit(rng) < config.flip_probability;
    std::vector<GroundTruth> gt;
    if (t < by_frame[v].size()) {
      for (const auto& g : by_frame[v][t]) {
        if (g.visibility >= config.min_visibility) gt.push_back(flip ? flip_gt(g, width) : g);
      }
    }
    Tape tape;
    const auto layers = record_backbone(tape, base, true);
    const auto heads = record_heads(tape, base);
    const Var frame = tape.constant(flip ? flip_frame(videos[v].frames[t]) : videos[v].frames[t]);
    const auto taps = record_backbone_features(tape, frame, layers, base.config);
    std::vector<Var> grids;
    for (std::size_t s = 0; s < heads.size(); ++s) {
      const Var single[1] = {taps[s]};
      grids.push_back(record_scale_forward(tape, heads[s], single, base.config.lstm_kernel));
    }
    std::size_t skipped = 0;
    const Var loss = record_detection_loss(tape, grids, gt, base.config, config.loss, &skipped);
    const double value = tape.value(loss).item();
    result.skipped_gt += skipped;
    result.max_tape_nodes = std::max(result.max_tape_nodes, tape.node_count());
    if (!std::isfinite(value)) {
      ++result.skipped_steps;
      if (++consecutive_bad >= 3) {
        throw TrainingAborted("pretrain_base: three consecutive non-finite losses at step " +
                              std::to_string(step));
      }
      continue;
    }
    consecutive_bad = 0;
    const Gradients g = tape.backward(loss);
    std::vector<Tensor*> ps;
    std::vector<const Tensor*> gs;
    for (std::size_t l = 0; l < base.backbone.size(); ++l) {
      ps.push_back(&base.backbone[l].kernels);
      gs.push_back(&g[layers[l].kernels]);
      ps.push_back(&base.backbone[l].bias);
      gs.push_back(&g[layers[l].bias]);
    }
    for (std::size_t s = 0; s < heads.size(); ++s) {
      ps.push_back(&base.heads[s].kernels);
      gs.push_back(&g[heads[s].kernels]);
      ps.push_back(&base.heads[s].bias);
      gs.push_back(&g[heads[s].bias]);
    }
    adam.step(ps, gs);
    result.trace.push_back({0, step, value});
    sum += value;
  }
  result.epoch_loss.push_back(result.trace.empty() ? 0.0
                                                   : sum / static_cast<double>(result.trace.size()));
  result.params = std::move(base);
  return result;
}

}  // namespace tdet
