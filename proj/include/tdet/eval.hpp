#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tdet/box.hpp"
#include "tdet/data.hpp"
#include "tdet/detector.hpp"

namespace tdet {

inline constexpr double kMatchIou = 0.7;
inline constexpr double kHiddenBelow = 0.5;
inline constexpr double kEvalNmsIou = 0.5;

/// Outcome of one ranked detection.
struct MatchRecord {
  std::size_t detection = 0;         // index into the input detections
  bool true_positive = false;
  std::optional<std::size_t> gt;     // index into the input gts, for TPs
  double visibility = 0.0;           // matched gt visibility, for TPs
  double confidence = 0.0;
};

struct MatchResult {
  std::vector<MatchRecord> records;  // in global rank order
  std::size_t total_gt = 0;
  std::size_t hidden_gt = 0;
  std::size_t false_negatives = 0;   // after the full sweep
};

/// Greedy matching. Detections are visited in rank order (rank_before);
/// each takes the unmatched gt of its own frame with the highest IoU, lower
/// gt index on ties, when that IoU >= iou_threshold, and is a false positive
/// otherwise.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts,
                             double iou_threshold = kMatchIou);

/// Cumulative counts after each rank.
struct RankCounts {
  std::vector<std::size_t> tp, fp, tp_hidden, tp_visible;
};

/// Partitions TPs by matched-gt visibility: < threshold hidden, else visible.
RankCounts split_tp(const std::vector<MatchRecord>& records,
                    double visibility_threshold = kHiddenBelow);

enum class Variant { all, hidden, visible };
const char* variant_name(Variant v);

struct PRPoint {
  std::size_t rank = 0;  // 1-based
  double confidence = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Ranked sweep. At rank k, with FN = total_gt - TP(k):
///   all:     P = TP/(TP+FP),   R = TP/(TP+FN)
///   visible: P = TPv/(TPv+FP), R = TPv/(TPv+FN)
///   hidden:  P = TPh/(TPh+FP), R = TPh/(TPh+FN)
/// Points with a zero denominator are skipped.
std::vector<PRPoint> pr_curve(const std::vector<MatchRecord>& records, std::size_t total_gt,
                              Variant variant, double visibility_threshold = kHiddenBelow);

struct AveragePrecision {
  double value = 0.0;
  bool empty_curve = false;
};

/// All-point interpolation: sum over distinct recalls r_k (r_0 = 0) of
/// (r_k - r_{k-1}) * max{precision at recall >= r_k}.
AveragePrecision interpolated_ap(const std::vector<PRPoint>& curve);

struct PronenessPoint {
  std::size_t rank = 0;
  double recall = 0.0;
  double visible_share = 0.0;  // TP_visible / TP
};

/// Overall recall vs TP_visible/TP along the sweep; ranks with TP = 0 are
/// omitted.
std::vector<PronenessPoint> proneness_curve(const std::vector<MatchRecord>& records,
                                            std::size_t total_gt,
                                            double visibility_threshold = kHiddenBelow);

struct EvalOptions {
  double iou_threshold = kMatchIou;
  double nms_iou = kEvalNmsIou;
  double conf_threshold = 0.0;
  double visibility_threshold = kHiddenBelow;
  /// Worker threads across videos; 0 reads TDET_THREADS.
  std::size_t threads = 0;
};

struct EvalReport {
  std::string mode;
  double ap_all = 0.0, ap_hidden = 0.0, ap_visible = 0.0;
  std::vector<PRPoint> curve_all, curve_hidden, curve_visible;
  std::vector<PronenessPoint> proneness;
  std::size_t tp = 0, fp = 0, fn = 0, tp_hidden = 0, tp_visible = 0;
  std::size_t total_gt = 0, hidden_gt = 0, num_detections = 0, num_frames = 0;
  double hidden_fraction = 0.0;
  double final_recall = 0.0;
};

/// Full report from matches (no model involved).
EvalReport build_report(const MatchResult& m, const std::string& mode,
                        double visibility_threshold = kHiddenBelow);

/// Detections for every frame of every video, with globally unique frame
/// keys (videos concatenated in order). gts are re-keyed the same way.
struct DetectionSet {
  std::vector<Detection> detections;
  std::vector<GroundTruth> gts;
  std::size_t num_frames = 0;
};

DetectionSet run_detector(const ModelParams& model, const std::vector<Video>& videos, Mode mode,
                          const EvalOptions& opts = {});

/// Runs the model over each video in order (sequenced mode threads the
/// recurrent state through the whole video), decodes at the confidence
/// threshold, applies NMS per frame, matches and builds the report.
EvalReport evaluate(const ModelParams& model, const std::vector<Video>& videos, Mode mode,
                    const EvalOptions& opts = {});

}  // namespace tdet
