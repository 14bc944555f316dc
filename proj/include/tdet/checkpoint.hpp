#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "tdet/detector.hpp"

namespace tdet {

nlohmann::json config_to_json(const DetectorConfig& config);
DetectorConfig config_from_json(const nlohmann::json& j);

/// Checkpoint layout:
///   "TDET1"
///   u32 little-endian length N, then N bytes of JSON:
///     {"config": {...}, "temporal": bool, "frozen": [bool per layer]}
///   tensors (tensor serialisation format), in order:
///     per backbone layer: kernels, bias
///     per scale: [temporal only: per gate i,f,o,g: W, U, b], head kernels,
///                head bias
void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace tdet
