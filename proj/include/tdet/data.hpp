#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tdet/box.hpp"
#include "tdet/tensor.hpp"

namespace tdet {

struct GroundTruth {
  int frame_index = 0;  // 0-based
  int track_id = 0;
  BBox box;
  double visibility = 1.0;  // visible fraction of the box area, in [0,1]
  int class_id = 1;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// A video: frames [3,H,W] with values in [0,1], and ground truth rows keyed
/// by 0-based frame index. Frames may be empty when only annotations were
/// loaded.
struct Video {
  std::string name;
  std::vector<Tensor> frames;
  std::vector<GroundTruth> gt;

  std::size_t num_frames() const { return frames.size(); }
  /// gt grouped by frame, sized to num_frames().
  std::vector<std::vector<GroundTruth>> gt_by_frame() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SyntheticSceneConfig {
  std::size_t image_size = 64;
  std::size_t num_frames = 200;
  std::size_t num_videos = 12;
  int min_objects = 1;
  int max_objects = 2;
  Range object_size{18.0, 28.0};   // side lengths, px
  Range speed{1.0, 2.0};           // px per frame
  double max_heading_deg = 20.0;   // motion direction within this angle of horizontal
  double jitter = 0.1;             // std-dev of per-frame position noise, px
  int min_occluders = 1;
  int max_occluders = 2;
  Range occluder_width{14.0, 24.0};
  Range occluder_height{28.0, 64.0};
  bool object_occlusion = false;   // count object-object overlap in visibility
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json scene_to_json(const SyntheticSceneConfig& cfg);
SyntheticSceneConfig scene_from_json(const nlohmann::json& j);

/// Visible fraction of `box` given opaque `occluders` and the image bounds.
/// Exact for axis-aligned rectangles (inclusion-exclusion over the
/// occluders that touch the box).
double visible_fraction(const BBox& box, const std::vector<BBox>& occluders,
                        double image_w, double image_h);

/// Renders one video. Every object has a gt row on every frame, including
/// frames where it is fully hidden (visibility 0).
Video generate_video(const SyntheticSceneConfig& cfg, std::uint64_t seed);

/// cfg.num_videos videos seeded from cfg.seed.
std::vector<Video> generate_dataset(const SyntheticSceneConfig& cfg);

/// Fraction of gt rows with visibility < 0.5.
double hidden_fraction(const std::vector<Video>& videos);

/// Rescales the occluder size ranges until a probe dataset generated from
/// the config has the requested hidden fraction (within `tolerance` when
/// attainable). Deterministic.
SyntheticSceneConfig tune_hidden_fraction(SyntheticSceneConfig cfg, double target,
                                          double tolerance = 0.02);

// ---------------------------------------------------------------------------
// MOT ground truth: frame,id,bb_left,bb_top,bb_width,bb_height,conf,class,vis
// ---------------------------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct MotParseOptions {
  /// Classes to keep; empty keeps every class.
  std::set<int> classes{1};
};

struct MotParseResult {
  std::vector<GroundTruth> rows;
  std::size_t dropped_conf0 = 0;
  std::size_t dropped_class = 0;
  std::size_t clamped_visibility = 0;
};

MotParseResult parse_mot_gt(std::istream& in, const MotParseOptions& opts = {});

/// Writes rows with conf 1, 1-based frames, shortest round-trip floats.
void emit_mot_gt(std::ostream& out, const std::vector<GroundTruth>& rows);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Dataset on disk:
//   <root>/scene.json
//   <root>/<video>/frame_%05d.ppm   (1-based, binary P6)
//   <root>/<video>/gt/gt.txt
// ---------------------------------------------------------------------------

void write_ppm(const std::filesystem::path& path, const Tensor& frame);
Tensor read_ppm(const std::filesystem::path& path);

/// Quantises values to multiples of 1/255 so that PPM storage is lossless.
void quantize_frame(Tensor& frame);

void write_dataset(const std::filesystem::path& root, const std::vector<Video>& videos,
                   const nlohmann::json& scene);
std::vector<Video> load_dataset(const std::filesystem::path& root,
                                const MotParseOptions& opts = {});

/// Per-video temporal split: frames [0, floor(0.8 N)) for training, the rest
/// for testing. Test videos are re-based to frame 0.
std::pair<std::vector<Video>, std::vector<Video>> split_train_test(
    const std::vector<Video>& videos);

/// Frame range [begin, end) of a video as a new video re-based to frame 0.
Video slice_video(const Video& v, std::size_t begin, std::size_t end);

}  // namespace tdet
