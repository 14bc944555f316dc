#include "tdet/detector.hpp"

#include <algorithm>
#include <cmath>

namespace tdet {

void DetectorConfig::validate() const {
  if (input_size == 0) throw ContractError("config: input_size must be positive");
  if (channels.empty()) throw ContractError("config: backbone has no layers");
  if (channels.size() != strides.size()) {
    throw ContractError("config: channels and strides differ in length");
  }
  if (kernel_size % 2 == 0 || lstm_kernel % 2 == 0) {
    throw ContractError("config: kernel sizes must be odd");
  }
  for (auto s : strides) {
    if (s == 0) throw ContractError("config: strides must be positive");
  }
  if (scales.empty()) throw ContractError("config: at least one scale required");
  for (const auto& sc : scales) {
    if (sc.layer >= channels.size()) {
      throw ContractError("config: scale taps layer " + std::to_string(sc.layer) +
                          " beyond backbone depth");
    }
    if (sc.anchors.empty()) throw ContractError("config: scale without anchors");
    for (const auto& a : sc.anchors) {
      if (!(a.w > 0.0 && a.h > 0.0)) {
        throw ContractError("config: anchors must have positive size");
      }
    }
  }
  std::size_t size = input_size;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    if (size + 2 * (kernel_size / 2) < kernel_size) {
      throw ContractError("config: backbone shrinks feature map to nothing");
    }
    size = (size + 2 * (kernel_size / 2) - kernel_size) / strides[l] + 1;
  }
}

std::size_t DetectorConfig::layer_size(std::size_t layer) const {
  std::size_t size = input_size;
  const std::size_t pad = kernel_size / 2;
  for (std::size_t l = 0; l <= layer; ++l) {
    size = (size + 2 * pad - kernel_size) / strides.at(l) + 1;
  }
  return size;
}

std::size_t DetectorConfig::grid_size(std::size_t scale) const {
  return layer_size(scales.at(scale).layer);
}

double DetectorConfig::stride_px(std::size_t scale) const {
  return static_cast<double>(input_size) / static_cast<double>(grid_size(scale));
}

std::size_t DetectorConfig::encoded_channels(std::size_t scale) const {
  return channels.at(scales.at(scale).layer);
}

bool ModelParams::temporal() const {
  return !heads.empty() && heads.front().lstm.has_value();
}

void ModelParams::validate() const {
  config.validate();
  if (backbone.size() != config.channels.size()) {
    throw ShapeError("model: backbone depth does not match config");
  }
  std::size_t cin = 3;
  for (std::size_t l = 0; l < backbone.size(); ++l) {
    const std::size_t k = config.kernel_size;
    const std::size_t cout = config.channels[l];
    if (backbone[l].kernels.shape() != Shape{cout, cin, k, k} ||
        backbone[l].bias.shape() != Shape{cout}) {
      throw ShapeError("model: backbone layer " + std::to_string(l) +
                       " has shape " + shape_str(backbone[l].kernels.shape()));
    }
    cin = cout;
  }
  if (heads.size() != config.scales.size()) {
    throw ShapeError("model: head count does not match scale count");
  }
  const bool temporal_model = temporal();
  for (std::size_t s = 0; s < heads.size(); ++s) {
    const auto& head = heads[s];
    if (head.lstm.has_value() != temporal_model) {
      throw ShapeError("model: mixed temporal and base heads");
    }
    const std::size_t c = config.encoded_channels(s);
    const std::size_t outs = config.scales[s].anchors.size() * kBoxFields;
    const std::size_t width = temporal_model ? 2 * c : c;
    if (head.kernels.shape() != Shape{outs, width, 1, 1}) {
      throw ShapeError("model: head " + std::to_string(s) + " kernels " +
                       shape_str(head.kernels.shape()) + " but expected " +
                       shape_str({outs, width, 1, 1}));
    }
    if (head.bias.shape() != Shape{outs}) {
      throw ShapeError("model: head bias shape " + shape_str(head.bias.shape()));
    }
    if (head.lstm) {
      head.lstm->validate();
      if (head.lstm->in_channels() != c || head.lstm->filters() != c) {
        throw ShapeError("model: ConvLSTM filters must equal encoded channels");
      }
      if (head.lstm->kernel_size() != config.lstm_kernel) {
        throw ShapeError("model: ConvLSTM kernel does not match config");
      }
    }
  }
}

ModelParams init_base_model(const DetectorConfig& config, std::mt19937_64& rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  std::size_t cin = 3;
  const std::size_t k = config.kernel_size;
  for (std::size_t l = 0; l < config.channels.size(); ++l) {
    const std::size_t cout = config.channels[l];
    ConvLayer layer{Tensor({cout, cin, k, k}), Tensor({cout}), false};
    const double s = std::sqrt(6.0 / static_cast<double>(cin * k * k));
    std::uniform_real_distribution<double> u(-s, s);
    for (double& v : layer.kernels.data()) v = u(rng);
    p.backbone.push_back(std::move(layer));
    cin = cout;
  }
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    const std::size_t c = config.encoded_channels(s);
    const std::size_t na = config.scales[s].anchors.size();
    ScaleHead head{std::nullopt, Tensor({na * kBoxFields, c, 1, 1}),
                   Tensor({na * kBoxFields})};
    const double r = 1.0 / std::sqrt(static_cast<double>(c));
    std::uniform_real_distribution<double> u(-r, r);
    for (double& v : head.kernels.data()) v = 0.1 * u(rng);
    // Start with low objectness so early training is not dominated by
    // background false positives.
    for (std::size_t a = 0; a < na; ++a) head.bias[a * kBoxFields + 4] = -4.0;
    p.heads.push_back(std::move(head));
  }
  return p;
}

std::vector<Tensor> backbone_outputs(const Tensor& frame,
                                     const ModelParams& params) {
  const auto& cfg = params.config;
  if (frame.shape() != Shape{3, cfg.input_size, cfg.input_size}) {
    throw ShapeError("backbone: frame " + shape_str(frame.shape()) +
                     " but model expects " +
                     shape_str({3, cfg.input_size, cfg.input_size}));
  }
  std::vector<Tensor> outs;
  outs.reserve(params.backbone.size());
  const Tensor* x = &frame;
  for (std::size_t l = 0; l < params.backbone.size(); ++l) {
    const auto& layer = params.backbone[l];
    outs.push_back(elementwise(
        Unary::leaky_relu,
        add_channel_bias(conv2d(*x, layer.kernels, cfg.strides[l],
                                cfg.kernel_size / 2),
                         layer.bias)));
    x = &outs.back();
  }
  return outs;
}

std::vector<Tensor> backbone_features(const Tensor& frame,
                                      const ModelParams& params) {
  std::vector<Tensor> outs = backbone_outputs(frame, params);
  std::vector<Tensor> taps;
  for (const auto& sc : params.config.scales) taps.push_back(outs[sc.layer]);
  return taps;
}

Tensor head_forward(const ScaleHead& head, const Tensor& features,
                    const Tensor* history) {
  if (head.lstm) {
    if (history == nullptr) throw ContractError("temporal head needs history");
    return add_channel_bias(conv2d(concat_channels(features, *history),
                                   head.kernels, 1, 0),
                            head.bias);
  }
  return add_channel_bias(conv2d(features, head.kernels, 1, 0), head.bias);
}

RawGrids base_forward(const Tensor& frame, const ModelParams& base) {
  if (base.temporal()) throw ContractError("base_forward on a temporal model");
  const auto feats = backbone_features(frame, base);
  RawGrids grids;
  for (std::size_t s = 0; s < base.heads.size(); ++s) {
    grids.push_back(head_forward(base.heads[s], feats[s], nullptr));
  }
  return grids;
}

RawGrids forward(std::span<const Tensor> frames, Mode mode,
                 const ModelParams& params) {
  if (frames.empty()) throw ContractError("forward: empty frame sequence");
  if (!params.temporal()) return base_forward(frames.back(), params);

  const std::size_t nscales = params.heads.size();
  const std::size_t history_len = mode == Mode::sequenced ? frames.size() - 1 : 0;
  // per_scale[s][t]
  std::vector<std::vector<Tensor>> per_scale(nscales);
  for (std::size_t t = 0; t < history_len; ++t) {
    auto f = backbone_features(frames[t], params);
    for (std::size_t s = 0; s < nscales; ++s) per_scale[s].push_back(std::move(f[s]));
  }
  const auto current = backbone_features(frames.back(), params);
  RawGrids grids;
  for (std::size_t s = 0; s < nscales; ++s) {
    const auto& head = params.heads[s];
    const ConvLSTMState state =
        encode_history(per_scale[s], *head.lstm, current[s].dim(1), current[s].dim(2));
    grids.push_back(head_forward(head, current[s], &state.h));
  }
  return grids;
}

SequenceRunner::SequenceRunner(const ModelParams& params, Mode mode)
    : params_(&params), mode_(mode) {
  reset();
}

void SequenceRunner::reset() {
  states_.clear();
  if (!params_->temporal()) return;
  for (std::size_t s = 0; s < params_->heads.size(); ++s) {
    const std::size_t n = params_->config.grid_size(s);
    states_.push_back(ConvLSTMState::zeros(params_->config.encoded_channels(s), n, n));
  }
}

RawGrids SequenceRunner::step(const Tensor& frame) {
  if (!params_->temporal()) return base_forward(frame, *params_);
  const auto feats = backbone_features(frame, *params_);
  RawGrids grids;
  for (std::size_t s = 0; s < feats.size(); ++s) {
    const auto& head = params_->heads[s];
    grids.push_back(head_forward(head, feats[s], &states_[s].h));
    if (mode_ == Mode::sequenced) {
      states_[s] = convlstm_step(feats[s], states_[s], *head.lstm);
    }
  }
  return grids;
}

ModelParams transfer_weights(const ModelParams& base, std::uint64_t init_seed) {
  base.validate();
  if (base.temporal()) {
    throw ShapeError("transfer_weights: head already has 2C input channels");
  }
  ModelParams out;
  out.config = base.config;
  out.backbone = base.backbone;
  for (auto& layer : out.backbone) layer.frozen = true;
  std::mt19937_64 rng(init_seed);
  for (std::size_t s = 0; s < base.heads.size(); ++s) {
    const auto& bh = base.heads[s];
    const std::size_t c = base.config.encoded_channels(s);
    const std::size_t outs = bh.kernels.dim(0);
    ScaleHead head;
    head.lstm = init_convlstm(c, c, base.config.lstm_kernel, rng);
    head.kernels = Tensor({outs, 2 * c, 1, 1});
    for (std::size_t o = 0; o < outs; ++o) {
      for (std::size_t i = 0; i < c; ++i) {
        head.kernels[o * 2 * c + i] = bh.kernels[o * c + i];
      }
    }
    head.bias = bh.bias;
    out.heads.push_back(std::move(head));
  }
  out.validate();
  return out;
}

std::vector<Detection> decode(const Tensor& grid, std::span<const Anchor> anchors,
                              double conf_threshold, std::size_t input_size,
                              int frame_index, std::size_t cell_offset) {
  if (grid.rank() != 3 || grid.dim(0) != anchors.size() * kBoxFields ||
      grid.dim(1) != grid.dim(2)) {
    throw ShapeError("decode: grid " + shape_str(grid.shape()) + " for " +
                     std::to_string(anchors.size()) + " anchors");
  }
  const std::size_t n = grid.dim(1);
  const double stride = static_cast<double>(input_size) / static_cast<double>(n);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        const std::size_t ch = a * kBoxFields;
        const double conf = sigmoid(grid.at(ch + 4, i, j));
        if (conf < conf_threshold || conf <= 0.0) continue;
        const double cx = (static_cast<double>(j) + sigmoid(grid.at(ch, i, j))) * stride;
        const double cy = (static_cast<double>(i) + sigmoid(grid.at(ch + 1, i, j))) * stride;
        const double w = anchors[a].w * std::exp(grid.at(ch + 2, i, j));
        const double h = anchors[a].h * std::exp(grid.at(ch + 3, i, j));
        out.push_back(Detection{BBox::from_center(cx, cy, w, h), conf, frame_index,
                                cell_offset + (i * n + j) * anchors.size() + a});
      }
    }
  }
  return out;
}

std::vector<Detection> decode_all(const RawGrids& grids,
                                  const DetectorConfig& config,
                                  double conf_threshold, int frame_index) {
  std::vector<Detection> out;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < grids.size(); ++s) {
    const auto& anchors = config.scales.at(s).anchors;
    auto d = decode(grids[s], anchors, conf_threshold, config.input_size,
                    frame_index, offset);
    out.insert(out.end(), d.begin(), d.end());
    offset += grids[s].dim(1) * grids[s].dim(2) * anchors.size();
  }
  return out;
}

bool rank_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.cell_index != b.cell_index) return a.cell_index < b.cell_index;
  if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
  if (a.box.x != b.box.x) return a.box.x < b.box.x;
  if (a.box.y != b.box.y) return a.box.y < b.box.y;
  if (a.box.w != b.box.w) return a.box.w < b.box.w;
  return a.box.h < b.box.h;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), rank_before);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<TapeConvLayer> record_backbone(Tape& tape, const ModelParams& params,
                                           bool trainable) {
  std::vector<TapeConvLayer> out;
  for (const auto& l : params.backbone) {
    if (trainable) {
      out.push_back({tape.trainable(l.kernels), tape.trainable(l.bias)});
    } else {
      out.push_back({tape.constant(l.kernels), tape.constant(l.bias)});
    }
  }
  return out;
}

std::vector<Var> record_backbone_features(Tape& tape, Var frame,
                                          std::span<const TapeConvLayer> layers,
                                          const DetectorConfig& config) {
  std::vector<Var> outs;
  Var x = frame;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = tape.leaky_relu(tape.add_channel_bias(
        tape.conv2d(x, layers[l].kernels, config.strides[l], config.kernel_size / 2),
        layers[l].bias));
    outs.push_back(x);
  }
  std::vector<Var> taps;
  for (const auto& sc : config.scales) taps.push_back(outs.at(sc.layer));
  return taps;
}

std::vector<TapeScaleHead> record_heads(Tape& tape, const ModelParams& params) {
  std::vector<TapeScaleHead> out;
  for (const auto& head : params.heads) {
    TapeScaleHead th;
    if (head.lstm) th.lstm = record_weights(tape, *head.lstm, true);
    th.kernels = tape.trainable(head.kernels);
    th.bias = tape.trainable(head.bias);
    out.push_back(th);
  }
  return out;
}

Var record_scale_forward(Tape& tape, const TapeScaleHead& head,
                         std::span<const Var> features, std::size_t lstm_kernel) {
  if (features.empty()) throw ContractError("record_scale_forward: no frames");
  const Var current = features.back();
  if (!head.lstm) {
    return tape.add_channel_bias(tape.conv2d(current, head.kernels, 1, 0), head.bias);
  }
  const Tensor& cur = tape.value(current);
  TapeConvLSTMState state = record_zero_state(tape, tape.value(head.lstm->biases[0]).dim(0),
                                              cur.dim(1), cur.dim(2));
  for (std::size_t t = 0; t + 1 < features.size(); ++t) {
    state = convlstm_step(tape, features[t], state, *head.lstm, lstm_kernel);
  }
  return tape.add_channel_bias(
      tape.conv2d(tape.concat_channels(current, state.h), head.kernels, 1, 0),
      head.bias);
}

}  // namespace tdet
