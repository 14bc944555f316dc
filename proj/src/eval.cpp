#include "tdet/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "tdet/parallel.hpp"

namespace tdet {

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_threshold) {
  MatchResult res;
  res.total_gt = gts.size();
  std::map<int, std::vector<std::size_t>> gts_by_frame;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    gts_by_frame[gts[g].frame_index].push_back(g);
    if (gts[g].visibility < kHiddenBelow) ++res.hidden_gt;
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
    return rank_before(dets[a], dets[b]);
  });

  std::vector<bool> matched(gts.size(), false);
  std::size_t tp = 0;
  for (std::size_t d : order) {
    MatchRecord rec;
    rec.detection = d;
    rec.confidence = dets[d].confidence;
    const auto it = gts_by_frame.find(dets[d].frame_index);
    double best = -1.0;
    std::optional<std::size_t> best_gt;
    if (it != gts_by_frame.end()) {
      for (std::size_t g : it->second) {
        if (matched[g]) continue;
        const double v = iou(dets[d].box, gts[g].box);
        if (v > best) {  // strict: lower index wins ties
          best = v;
          best_gt = g;
        }
      }
    }
    if (best_gt && best >= iou_threshold) {
      matched[*best_gt] = true;
      rec.true_positive = true;
      rec.gt = best_gt;
      rec.visibility = gts[*best_gt].visibility;
      ++tp;
    }
    res.records.push_back(rec);
  }
  res.false_negatives = gts.size() - tp;
  return res;
}

RankCounts split_tp(const std::vector<MatchRecord>& records, double visibility_threshold) {
  RankCounts c;
  std::size_t tp = 0, fp = 0, th = 0, tv = 0;
  for (const auto& r : records) {
    if (r.true_positive) {
      ++tp;
      if (r.visibility < visibility_threshold) ++th; else ++tv;
    } else {
      ++fp;
    }
    c.tp.push_back(tp);
    c.fp.push_back(fp);
    c.tp_hidden.push_back(th);
    c.tp_visible.push_back(tv);
  }
  return c;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::all: return "all";
    case Variant::hidden: return "hidden";
    case Variant::visible: return "visible";
  }
  return "?";
}

std::vector<PRPoint> pr_curve(const std::vector<MatchRecord>& records, std::size_t total_gt,
                              Variant variant, double visibility_threshold) {
  if (total_gt == 0) throw ContractError("pr_curve: no ground truth");
  const RankCounts c = split_tp(records, visibility_threshold);
  std::vector<PRPoint> out;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const std::size_t fn = total_gt - c.tp[k];
    std::size_t tp = c.tp[k];
    if (variant == Variant::hidden) tp = c.tp_hidden[k];
    if (variant == Variant::visible) tp = c.tp_visible[k];
    const std::size_t pden = tp + c.fp[k];
    const std::size_t rden = tp + fn;
    if (pden == 0 || rden == 0) continue;
    out.push_back(PRPoint{k + 1, records[k].confidence,
                          static_cast<double>(tp) / static_cast<double>(pden),
                          static_cast<double>(tp) / static_cast<double>(rden)});
  }
  return out;
}

AveragePrecision interpolated_ap(const std::vector<PRPoint>& curve) {
  if (curve.empty()) return {0.0, true};
  // Recall is non-decreasing along the sweep; sort defensively by recall
  // with a stable order.
  std::vector<PRPoint> pts = curve;
  std::stable_sort(pts.begin(), pts.end(),
                   [](const PRPoint& a, const PRPoint& b) { return a.recall < b.recall; });
  std::vector<double> suffix_max(pts.size());
  double m = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    m = std::max(m, pts[i].precision);
    suffix_max[i] = m;
  }
  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0 && pts[i].recall == pts[i - 1].recall) continue;
    ap += (pts[i].recall - prev) * suffix_max[i];
    prev = pts[i].recall;
  }
  return {ap, false};
}

std::vector<PronenessPoint> proneness_curve(const std::vector<MatchRecord>& records,
                                            std::size_t total_gt,
                                            double visibility_threshold) {
  if (total_gt == 0) throw ContractError("proneness_curve: no ground truth");
  const RankCounts c = split_tp(records, visibility_threshold);
  std::vector<PronenessPoint> out;
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (c.tp[k] == 0) continue;
    out.push_back(PronenessPoint{
        k + 1, static_cast<double>(c.tp[k]) / static_cast<double>(total_gt),
        static_cast<double>(c.tp_visible[k]) / static_cast<double>(c.tp[k])});
  }
  return out;
}

EvalReport build_report(const MatchResult& m, const std::string& mode,
                        double visibility_threshold) {
  EvalReport r;
  r.mode = mode;
  r.total_gt = m.total_gt;
  r.hidden_gt = m.hidden_gt;
  r.num_detections = m.records.size();
  r.hidden_fraction =
      m.total_gt ? static_cast<double>(m.hidden_gt) / static_cast<double>(m.total_gt) : 0.0;
  const RankCounts c = split_tp(m.records, visibility_threshold);
  if (!m.records.empty()) {
    r.tp = c.tp.back();
    r.fp = c.fp.back();
    r.tp_hidden = c.tp_hidden.back();
    r.tp_visible = c.tp_visible.back();
  }
  r.fn = m.total_gt - r.tp;
  if (m.total_gt == 0) return r;
  r.final_recall = static_cast<double>(r.tp) / static_cast<double>(m.total_gt);
  r.curve_all = pr_curve(m.records, m.total_gt, Variant::all, visibility_threshold);
  r.curve_hidden = pr_curve(m.records, m.total_gt, Variant::hidden, visibility_threshold);
  r.curve_visible = pr_curve(m.records, m.total_gt, Variant::visible, visibility_threshold);
  r.ap_all = interpolated_ap(r.curve_all).value;
  r.ap_hidden = interpolated_ap(r.curve_hidden).value;
  r.ap_visible = interpolated_ap(r.curve_visible).value;
  r.proneness = proneness_curve(m.records, m.total_gt, visibility_threshold);
  return r;
}

DetectionSet run_detector(const ModelParams& model, const std::vector<Video>& videos, Mode mode,
                          const EvalOptions& opts) {
  std::vector<std::vector<Detection>> per_video(videos.size());
  std::vector<std::size_t> offsets(videos.size(), 0);
  std::size_t total_frames = 0;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    offsets[v] = total_frames;
    total_frames += videos[v].num_frames();
  }
  const std::size_t threads = opts.threads ? opts.threads : thread_budget();
  parallel_for(videos.size(), threads, [&](std::size_t v) {
    SequenceRunner runner(model, mode);
    std::vector<Detection> out;
    for (std::size_t t = 0; t < videos[v].num_frames(); ++t) {
      const int key = static_cast<int>(offsets[v] + t);
      const RawGrids grids = runner.step(videos[v].frames[t]);
      auto dets = nms(decode_all(grids, model.config, opts.conf_threshold, key), opts.nms_iou);
      out.insert(out.end(), dets.begin(), dets.end());
    }
    per_video[v] = std::move(out);
  });
  DetectionSet set;
  set.num_frames = total_frames;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    set.detections.insert(set.detections.end(), per_video[v].begin(), per_video[v].end());
    for (const auto& g : videos[v].gt) {
      if (g.frame_index < 0 || static_cast<std::size_t>(g.frame_index) >= videos[v].num_frames()) {
        continue;
      }
      GroundTruth r = g;
      r.frame_index = static_cast<int>(offsets[v]) + g.frame_index;
      set.gts.push_back(r);
    }
  }
  return set;
}

EvalReport evaluate(const ModelParams& model, const std::vector<Video>& videos, Mode mode,
                    const EvalOptions& opts) {
  std::size_t frames = 0;
  for (const auto& v : videos) frames += v.num_frames();
  if (frames == 0) throw ContractError("evaluate: dataset is empty");
  const DetectionSet set = run_detector(model, videos, mode, opts);
  const MatchResult m = match_detections(set.detections, set.gts, opts.iou_threshold);
  EvalReport r = build_report(m, mode == Mode::plain ? "plain" : "sequenced",
                              opts.visibility_threshold);
  r.num_frames = set.num_frames;
  return r;
}

}  // namespace tdet
