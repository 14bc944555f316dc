#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tdet/eval.hpp"

using namespace tdet;

namespace {

Detection det(double x, double y, double w, double h, double conf, int frame = 0) {
  Detection d;
  d.box = {x, y, w, h};
  d.confidence = conf;
  d.frame_index = frame;
  return d;
}

GroundTruth gt(double x, double y, double w, double h, double vis = 1.0, int frame = 0) {
  GroundTruth g;
  g.box = {x, y, w, h};
  g.visibility = vis;
  g.frame_index = frame;
  return g;
}

MatchRecord outcome(bool tp, double conf, double vis = 1.0) {
  MatchRecord r;
  r.true_positive = tp;
  r.confidence = conf;
  r.visibility = tp ? vis : 0.0;
  return r;
}

ModelParams temporal(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams m = transfer_weights(init_base_model(DetectorConfig{}, rng), seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& head : m.heads) {
    const std::size_t cin = head.kernels.dim(1);
    for (std::size_t o = 0; o < head.kernels.dim(0); ++o)
      for (std::size_t i = cin / 2; i < cin; ++i) head.kernels[o * cin + i] = u(rng);
  }
  return m;
}

std::vector<Video> scene(std::size_t videos, std::size_t frames) {
  SyntheticSceneConfig sc;
  sc.num_videos = videos;
  sc.num_frames = frames;
  return generate_dataset(sc);
}

void check_same_report(const EvalReport& a, const EvalReport& b) {
  CHECK(a.ap_all == b.ap_all);
  CHECK(a.ap_hidden == b.ap_hidden);
  CHECK(a.ap_visible == b.ap_visible);
  CHECK(a.tp == b.tp);
  CHECK(a.fp == b.fp);
  CHECK(a.fn == b.fn);
  CHECK(a.num_detections == b.num_detections);
  REQUIRE(a.curve_all.size() == b.curve_all.size());
  for (std::size_t k = 0; k < a.curve_all.size(); ++k) {
    CHECK(a.curve_all[k].precision == b.curve_all[k].precision);
    CHECK(a.curve_all[k].recall == b.curve_all[k].recall);
  }
}

}  // namespace

TEST_CASE("iou examples") {
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{0, 0, 10, 10}) == 1.0);
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{20, 0, 10, 10}) == 0.0);
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{10, 0, 10, 10}) == 0.0);
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{5, 0, 10, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("matching examples") {
  auto m = match_detections({det(0, 0, 10, 10, 0.9)}, {gt(0, 0, 10, 10)});
  CHECK(m.records.size() == 1);
  CHECK(m.records[0].true_positive);
  CHECK(m.false_negatives == 0);

  m = match_detections({}, {gt(0, 0, 10, 10), gt(20, 20, 5, 5)});
  CHECK(m.records.empty());
  CHECK(m.false_negatives == 2);

  // Below the 0.7 threshold: IoU 1/3.
  m = match_detections({det(5, 0, 10, 10, 0.9)}, {gt(0, 0, 10, 10)});
  CHECK_FALSE(m.records[0].true_positive);
  CHECK(m.false_negatives == 1);

  // Never across frames.
  m = match_detections({det(0, 0, 10, 10, 0.9, 1)}, {gt(0, 0, 10, 10, 1.0, 0)});
  CHECK_FALSE(m.records[0].true_positive);

  // Higher confidence goes first; the duplicate becomes a false positive.
  m = match_detections({det(0, 0, 10, 10, 0.4), det(0, 0, 10, 9, 0.8)}, {gt(0, 0, 10, 10)});
  CHECK(m.records[0].detection == 1);
  CHECK(m.records[0].true_positive);
  CHECK_FALSE(m.records[1].true_positive);

  // Equal IoU: the lower gt index wins.
  m = match_detections({det(0, 0, 10, 10, 0.9)}, {gt(0, 0, 10, 10), gt(0, 0, 10, 10)});
  CHECK(*m.records[0].gt == 0);
}

TEST_CASE("hidden and visible split") {
  const std::vector<MatchRecord> recs = {outcome(true, 0.9, 1.0), outcome(true, 0.8, 0.5),
                                         outcome(false, 0.7), outcome(true, 0.6, 0.49)};
  const auto c = split_tp(recs);
  CHECK(c.tp == std::vector<std::size_t>{1, 2, 2, 3});
  CHECK(c.fp == std::vector<std::size_t>{0, 0, 1, 1});
  CHECK(c.tp_visible == std::vector<std::size_t>{1, 2, 2, 2});
  CHECK(c.tp_hidden == std::vector<std::size_t>{0, 0, 0, 1});

  const auto all_visible = split_tp({outcome(true, 0.9), outcome(true, 0.8)});
  CHECK(all_visible.tp_hidden.back() == 0);
}

TEST_CASE("ranked TP, FP, TP with two ground truths") {
  const std::vector<MatchRecord> recs = {outcome(true, 0.9), outcome(false, 0.8),
                                         outcome(true, 0.7)};
  const auto pts = pr_curve(recs, 2, Variant::all);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].recall == 0.5);
  CHECK(pts[0].precision == 1.0);
  CHECK(pts[1].recall == 0.5);
  CHECK(pts[1].precision == 0.5);
  CHECK(pts[2].recall == 1.0);
  CHECK(pts[2].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(std::abs(interpolated_ap(pts).value - 0.8333333333333333) <= 1e-9);
  CHECK(interpolated_ap(pts).value == oracle::ap(pts));
}

TEST_CASE("curve and AP degenerate cases") {
  const auto perfect = pr_curve({outcome(true, 0.9), outcome(true, 0.8)}, 2, Variant::all);
  CHECK(perfect.back().recall == 1.0);
  CHECK(perfect.back().precision == 1.0);
  CHECK(interpolated_ap(perfect).value == 1.0);

  for (const auto& p : pr_curve({outcome(false, 0.9), outcome(false, 0.8)}, 3, Variant::all)) {
    CHECK(p.precision == 0.0);
  }

  CHECK(interpolated_ap({PRPoint{1, 1.0, 1.0, 1.0}}).value == 1.0);
  const auto empty = interpolated_ap({});
  CHECK(empty.value == 0.0);
  CHECK(empty.empty_curve);
  CHECK_THROWS_AS(pr_curve({outcome(true, 0.9)}, 0, Variant::all), ContractError);
}

TEST_CASE("variant recall keeps the overall false negatives in its denominator") {
  // One hidden and one visible gt; only the visible one is found.
  const std::vector<MatchRecord> recs = {outcome(true, 0.9, 1.0)};
  const auto vis = pr_curve(recs, 2, Variant::visible);
  REQUIRE(vis.size() == 1);
  CHECK(vis[0].recall == 0.5);  // 1 / (1 + 1)
  // No hidden TP and no FP yet: the hidden precision is 0/0 and skipped.
  CHECK(pr_curve(recs, 2, Variant::hidden).empty());
  const auto hid = pr_curve({outcome(true, 0.9, 1.0), outcome(false, 0.8)}, 2, Variant::hidden);
  REQUIRE(hid.size() == 1);
  CHECK(hid[0].rank == 2);
  CHECK(hid[0].precision == 0.0);
  CHECK(hid[0].recall == 0.0);
}

TEST_CASE("proneness examples") {
  const auto visible = proneness_curve({outcome(false, 0.95), outcome(true, 0.9, 0.8),
                                        outcome(true, 0.8, 1.0)},
                                       4);
  REQUIRE(visible.size() == 2);  // the leading FP rank has TP = 0
  for (const auto& p : visible) CHECK(p.visible_share == 1.0);
  CHECK(visible.back().recall == 0.5);

  for (const auto& p : proneness_curve({outcome(true, 0.9, 0.1), outcome(true, 0.8, 0.2)}, 2)) {
    CHECK(p.visible_share == 0.0);
  }

  // Recalling every gt ends at the visible fraction of the gt.
  const auto full = proneness_curve({outcome(true, 0.9, 1.0), outcome(true, 0.8, 0.1),
                                     outcome(false, 0.75), outcome(true, 0.7, 0.9),
                                     outcome(true, 0.6, 0.3), outcome(true, 0.5, 0.6)},
                                    5);
  CHECK(full.back().recall == 1.0);
  CHECK(full.back().visible_share == doctest::Approx(3.0 / 5.0).epsilon(1e-15));
}

TEST_CASE("brute-force pipeline equals the library on random instances") {
  std::mt19937_64 rng(99);
  int failures = 0, with_tp = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = oracle::random_instance(rng);
    if (!oracle::pipeline_agrees(in)) ++failures;
    for (const auto& r : match_detections(in.dets, in.gts).records) with_tp += r.true_positive;
  }
  CHECK(failures == 0);
  CHECK(with_tp > 500);
}

TEST_CASE("AP agrees with a dense Riemann sum") {
  std::mt19937_64 rng(5);
  int checked = 0;
  while (checked < 25) {
    const auto in = oracle::random_instance(rng);
    if (in.gts.empty()) continue;
    const auto m = match_detections(in.dets, in.gts);
    const auto pts = pr_curve(m.records, in.gts.size(), Variant::all);
    const double a = interpolated_ap(pts).value;
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(std::abs(a - oracle::riemann_ap(pts)) <= 1e-4);
    ++checked;
  }
}

TEST_CASE("sweep invariants") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = oracle::random_instance(rng);
    if (in.gts.empty()) continue;
    const auto m = match_detections(in.dets, in.gts);
    for (auto v : {Variant::all, Variant::hidden, Variant::visible}) {
      const auto pts = pr_curve(m.records, in.gts.size(), v);
      for (std::size_t k = 1; k < pts.size(); ++k) CHECK(pts[k].recall >= pts[k - 1].recall);
      const double a = interpolated_ap(pts).value;
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    // A stricter IoU threshold never adds true positives.
    std::size_t prev = in.gts.size() + 1;
    for (double thr : {0.3, 0.5, 0.7, 0.9}) {
      std::size_t tp = 0;
      for (const auto& r : match_detections(in.dets, in.gts, thr).records) tp += r.true_positive;
      CHECK(tp <= prev);
      prev = tp;
    }
  }
}

TEST_CASE("report counts satisfy the split identity") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = oracle::random_instance(rng);
    const auto r = build_report(match_detections(in.dets, in.gts), "plain");
    CHECK(r.tp == r.tp_hidden + r.tp_visible);
    CHECK(r.tp + r.fp == r.num_detections);
    CHECK(r.tp + r.fn == r.total_gt);
  }
}

TEST_CASE("a model that never fires detects nothing") {
  ModelParams m = temporal(3);
  for (auto& head : m.heads) {
    for (auto& v : head.kernels.data()) v = 0.0;
    for (std::size_t ch = 0; ch < head.bias.size(); ++ch) {
      head.bias[ch] = ch % kBoxFields == 4 ? -1e3 : 0.0;
    }
  }
  const auto videos = scene(2, 6);
  for (Mode mode : {Mode::plain, Mode::sequenced}) {
    const auto r = evaluate(m, videos, mode);
    CHECK(r.num_detections == 0);
    CHECK(r.ap_all == 0.0);
    CHECK(r.ap_hidden == 0.0);
    CHECK(r.ap_visible == 0.0);
    CHECK(r.fn == r.total_gt);
    CHECK(r.total_gt > 0);
    CHECK(r.num_frames == 12);
  }
}

TEST_CASE("single-frame videos give identical reports in both modes") {
  const ModelParams m = temporal(7);
  std::vector<Video> videos;
  for (const auto& v : scene(4, 5)) videos.push_back(slice_video(v, 2, 3));
  const auto plain = evaluate(m, videos, Mode::plain);
  const auto seq = evaluate(m, videos, Mode::sequenced);
  CHECK(plain.mode == "plain");
  CHECK(seq.mode == "sequenced");
  check_same_report(plain, seq);
}

TEST_CASE("evaluation is deterministic and independent of thread count") {
  const ModelParams m = temporal(8);
  const auto videos = scene(3, 6);
  EvalOptions one, many;
  one.threads = 1;
  many.threads = 3;
  check_same_report(evaluate(m, videos, Mode::sequenced, one),
                    evaluate(m, videos, Mode::sequenced, many));
  CHECK_THROWS_AS(evaluate(m, {}, Mode::plain), ContractError);
}

TEST_CASE("sequenced evaluation threads state through each video") {
  const ModelParams m = temporal(9);
  const auto videos = scene(1, 4);
  const auto set = run_detector(m, videos, Mode::sequenced);
  std::vector<Detection> expected;
  SequenceRunner runner(m, Mode::sequenced);
  for (std::size_t t = 0; t < 4; ++t) {
    auto d = nms(decode_all(runner.step(videos[0].frames[t]), m.config, 0.0, int(t)), kEvalNmsIou);
    expected.insert(expected.end(), d.begin(), d.end());
  }
  REQUIRE(set.detections.size() == expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    CHECK(set.detections[k].box == expected[k].box);
    CHECK(set.detections[k].confidence == expected[k].confidence);
  }
  CHECK(set.gts.size() == videos[0].gt.size());
}
