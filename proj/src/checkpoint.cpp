#include "tdet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace tdet {

namespace {

constexpr char kMagic[5] = {'T', 'D', 'E', 'T', '1'};

}  // namespace

nlohmann::json config_to_json(const DetectorConfig& config) {
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& sc : config.scales) {
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& a : sc.anchors) anchors.push_back({a.w, a.h});
    scales.push_back({{"layer", sc.layer}, {"anchors", anchors}});
  }
  return {{"input_size", config.input_size},
          {"channels", config.channels},
          {"strides", config.strides},
          {"kernel_size", config.kernel_size},
          {"lstm_kernel", config.lstm_kernel},
          {"scales", scales}};
}

DetectorConfig config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.input_size = j.value("input_size", c.input_size);
  c.channels = j.value("channels", c.channels);
  c.strides = j.value("strides", c.strides);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.lstm_kernel = j.value("lstm_kernel", c.lstm_kernel);
  if (j.contains("scales")) {
    c.scales.clear();
    for (const auto& s : j.at("scales")) {
      ScaleConfig sc;
      sc.layer = s.at("layer").get<std::size_t>();
      sc.anchors.clear();
      for (const auto& a : s.at("anchors")) {
        sc.anchors.push_back(Anchor{a.at(0).get<double>(), a.at(1).get<double>()});
      }
      c.scales.push_back(std::move(sc));
    }
  }
  c.validate();
  return c;
}

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  params.validate();
  nlohmann::json meta;
  meta["config"] = config_to_json(params.config);
  meta["temporal"] = params.temporal();
  std::vector<bool> frozen;
  for (const auto& l : params.backbone) frozen.push_back(l.frozen);
  meta["frozen"] = frozen;
  const std::string text = meta.dump();

  out.write(kMagic, sizeof kMagic);
  const auto n = static_cast<std::uint32_t>(text.size());
  const char len[4] = {static_cast<char>(n & 0xff), static_cast<char>((n >> 8) & 0xff),
                       static_cast<char>((n >> 16) & 0xff),
                       static_cast<char>((n >> 24) & 0xff)};
  out.write(len, 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& l : params.backbone) {
    write_tensor(out, l.kernels);
    write_tensor(out, l.bias);
  }
  for (const auto& h : params.heads) {
    if (h.lstm) {
      for (const Tensor* t : h.lstm->tensors()) write_tensor(out, *t);
    }
    write_tensor(out, h.kernels);
    write_tensor(out, h.bias);
  }
}

ModelParams read_checkpoint(std::istream& in) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  unsigned char len[4];
  if (!in.read(reinterpret_cast<char*>(len), 4)) {
    throw std::runtime_error("checkpoint: truncated header");
  }
  const std::uint32_t n = std::uint32_t(len[0]) | (std::uint32_t(len[1]) << 8) |
                          (std::uint32_t(len[2]) << 16) | (std::uint32_t(len[3]) << 24);
  std::string text(n, '\0');
  if (!in.read(text.data(), n)) throw std::runtime_error("checkpoint: truncated config");
  const auto meta = nlohmann::json::parse(text);

  ModelParams p;
  p.config = config_from_json(meta.at("config"));
  const bool temporal = meta.at("temporal").get<bool>();
  const auto frozen = meta.at("frozen").get<std::vector<bool>>();
  if (frozen.size() != p.config.channels.size()) {
    throw std::runtime_error("checkpoint: frozen flags do not match depth");
  }
  for (std::size_t l = 0; l < p.config.channels.size(); ++l) {
    ConvLayer layer;
    layer.kernels = read_tensor(in);
    layer.bias = read_tensor(in);
    layer.frozen = frozen[l];
    p.backbone.push_back(std::move(layer));
  }
  for (std::size_t s = 0; s < p.config.scales.size(); ++s) {
    ScaleHead h;
    if (temporal) {
      ConvLSTMWeights w;
      for (Tensor* t : w.tensors()) *t = read_tensor(in);
      h.lstm = std::move(w);
    }
    h.kernels = read_tensor(in);
    h.bias = read_tensor(in);
    p.heads.push_back(std::move(h));
  }
  p.validate();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, params);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace tdet
