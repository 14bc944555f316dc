#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "tdet/data.hpp"

using namespace tdet;
namespace fs = std::filesystem;

namespace {

// Counts sample points of a fine lattice over the box that fall inside the
// image and outside every occluder.
double lattice_visibility(const BBox& b, const std::vector<BBox>& occ, double side) {
  const int n = 200;
  int seen = 0;
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c) {
      const double x = b.x + (a + 0.5) * b.w / n;
      const double y = b.y + (c + 0.5) * b.h / n;
      bool vis = x >= 0 && y >= 0 && x < side && y < side;
      for (const auto& o : occ) vis = vis && !(x >= o.x && x < o.right() && y >= o.y && y < o.bottom());
      seen += vis;
    }
  return double(seen) / (n * n);
}

// Occluders render as flat grey; object pixels are always coloured.
bool occluder_pixel(const Tensor& f, long y, long x) {
  const double r = f.at(0, y, x), g = f.at(1, y, x), b = f.at(2, y, x);
  return r == g && g == b && r >= 0.44 && r <= 0.66;
}

double pixel_visibility(const Tensor& frame, const BBox& b) {
  const long n = static_cast<long>(frame.dim(1));
  long seen = 0;
  for (long y = long(b.y); y < long(b.y + b.h); ++y)
    for (long x = long(b.x); x < long(b.x + b.w); ++x)
      if (x >= 0 && y >= 0 && x < n && y < n && !occluder_pixel(frame, y, x)) ++seen;
  return double(seen) / b.area();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("tdet_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("visible fraction examples") {
  const BBox box{10, 10, 20, 20};
  CHECK(visible_fraction(box, {}, 64, 64) == 1.0);
  CHECK(visible_fraction(box, {BBox{0, 0, 20, 64}}, 64, 64) == 0.5);
  CHECK(visible_fraction(box, {BBox{0, 0, 64, 64}}, 64, 64) == 0.0);
  CHECK(visible_fraction(BBox{-10, 0, 20, 10}, {}, 64, 64) == 0.5);
  // Overlapping occluders are not double counted.
  CHECK(visible_fraction(box, {BBox{10, 10, 10, 20}, BBox{10, 10, 10, 20}}, 64, 64) == 0.5);
  CHECK(visible_fraction(box, {BBox{10, 10, 10, 20}, BBox{10, 10, 20, 10}}, 64, 64) == 0.25);
}

TEST_CASE("visible fraction agrees with a lattice count on random layouts") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-10, 60), size(4, 30);
  std::uniform_int_distribution<int> count(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const BBox b{pos(rng), pos(rng), size(rng), size(rng)};
    std::vector<BBox> occ;
    for (int k = count(rng); k > 0; --k) occ.push_back({pos(rng), pos(rng), size(rng), size(rng)});
    const double v = visible_fraction(b, occ, 64, 64);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(std::abs(v - lattice_visibility(b, occ, 64)) <= 0.02);
  }
}

TEST_CASE("scenes without occluders are fully visible") {
  SyntheticSceneConfig sc;
  sc.min_occluders = sc.max_occluders = 0;
  sc.num_frames = 30;
  const Video v = generate_video(sc, 5);
  CHECK(v.num_frames() == 30);
  for (const auto& g : v.gt) CHECK(g.visibility == 1.0);
}

TEST_CASE("generated visibility matches the rendered pixels") {
  SyntheticSceneConfig sc;
  sc.num_frames = 40;
  sc.min_objects = 1;
  sc.max_objects = 2;
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Video v = generate_video(sc, seed);
    for (const auto& g : v.gt) {
      CHECK(std::abs(g.visibility - pixel_visibility(v.frames[g.frame_index], g.box)) <= 0.02);
      ++checked;
    }
  }
  CHECK(checked >= 240);
}

TEST_CASE("every object has a row on every frame") {
  SyntheticSceneConfig sc;
  sc.num_frames = 25;
  const Video v = generate_video(sc, 9);
  std::set<int> ids;
  for (const auto& g : v.gt) ids.insert(g.track_id);
  CHECK(v.gt.size() == ids.size() * 25);
  for (const auto& rows : v.gt_by_frame()) CHECK(rows.size() == ids.size());
}

TEST_CASE("generation is deterministic") {
  SyntheticSceneConfig sc;
  sc.num_frames = 10;
  sc.num_videos = 3;
  const auto a = generate_dataset(sc);
  const auto b = generate_dataset(sc);
  REQUIRE(a.size() == 3);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].name == b[k].name);
    CHECK(a[k].gt == b[k].gt);
    for (std::size_t t = 0; t < a[k].num_frames(); ++t) CHECK(a[k].frames[t] == b[k].frames[t]);
  }
  sc.seed = 2;
  CHECK(generate_dataset(sc)[0].gt != a[0].gt);
}

TEST_CASE("scene config validation and JSON round trip") {
  SyntheticSceneConfig sc;
  sc.object_size = {10, 80};
  CHECK_THROWS_AS(sc.validate(), ContractError);
  sc = {};
  sc.speed = {2, 1};
  CHECK_THROWS_AS(sc.validate(), ContractError);
  sc = {};
  sc.max_heading_deg = 120;
  CHECK_THROWS_AS(sc.validate(), ContractError);

  sc = {};
  sc.seed = 77;
  sc.occluder_width = {3.25, 9.5};
  const auto back = scene_from_json(scene_to_json(sc));
  CHECK(scene_to_json(back) == scene_to_json(sc));
  CHECK(back.seed == 77);
  CHECK(back.occluder_width.lo == 3.25);
}

TEST_CASE("hidden fraction can be tuned to a target") {
  SyntheticSceneConfig sc;
  sc.num_frames = 60;
  sc.num_videos = 6;
  for (double target : {0.2, 0.39}) {
    const auto tuned = tune_hidden_fraction(sc, target);
    CHECK(std::abs(hidden_fraction(generate_dataset(tuned)) - target) <= 0.05);
  }
}

TEST_CASE("MOT row maps fields directly") {
  std::istringstream in("1,1,10,20,30,40,1,1,0.75\n");
  const auto r = parse_mot_gt(in);
  REQUIRE(r.rows.size() == 1);
  const auto& g = r.rows[0];
  CHECK(g.frame_index == 0);
  CHECK(g.track_id == 1);
  CHECK(g.box == BBox{10, 20, 30, 40});
  CHECK(g.visibility == 0.75);
  CHECK(g.class_id == 1);
}

TEST_CASE("MOT conventions: conf 0 and other classes are dropped, visibility clamped") {
  std::istringstream in(
      "1,1,10,20,30,40,0,1,0.5\n"
      "2,2,10,20,30,40,1,3,0.5\n"
      "\n"
      "3,3,10,20,30,40,1,1,1.5\r\n"
      "4,4,10,20,30,40,1,1,-0.1\n");
  const auto r = parse_mot_gt(in);
  CHECK(r.dropped_conf0 == 1);
  CHECK(r.dropped_class == 1);
  CHECK(r.clamped_visibility == 2);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].visibility == 1.0);
  CHECK(r.rows[1].visibility == 0.0);

  std::istringstream again("2,2,10,20,30,40,1,3,0.5\n");
  CHECK(parse_mot_gt(again, MotParseOptions{{}}).rows.size() == 1);
}

TEST_CASE("MOT fixture round-trips through the writer") {
  const std::string fixture =
      "1,1,10,20,30,40,1,1,0.75\n"
      "1,2,5.5,6.25,12,18,1,1,0\n"
      "3,1,11,21,30,40,1,1,1\n";
  std::istringstream in(fixture);
  const auto rows = parse_mot_gt(in).rows;
  REQUIRE(rows.size() == 3);
  std::ostringstream out;
  emit_mot_gt(out, rows);
  CHECK(out.str() == fixture);
  std::istringstream back(out.str());
  CHECK(parse_mot_gt(back).rows == rows);
}

TEST_CASE("malformed MOT rows report their line number") {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_mot_gt(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("1,1,10,20,30,40,1,1,0.75\n1,1,10,20,30,40,1,1\n") == 2);
  CHECK(line_of("1,1,10,20,30,40,1,1,1\n\n1,x,10,20,30,40,1,1,1\n") == 3);
  CHECK(line_of("0,1,10,20,30,40,1,1,1\n") == 1);
  CHECK(line_of("1,1,10,20,0,40,1,1,1\n") == 1);
  CHECK(line_of("1,1,10,20,30,40,1,1,0.5,7\n") == 1);
}

TEST_CASE("format_double is the shortest exact text") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, -0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.75) == "0.75");
  CHECK(format_double(30.0) == "30");
}

TEST_CASE("train/test split at 80 percent of each video") {
  SyntheticSceneConfig sc;
  sc.num_frames = 10;
  Video v10 = generate_video(sc, 1);
  sc.num_frames = 5;
  Video v5 = generate_video(sc, 2);
  const auto [train, test] = split_train_test({v10, v5});
  CHECK(train[0].num_frames() == 8);
  CHECK(test[0].num_frames() == 2);
  CHECK(train[1].num_frames() == 4);
  CHECK(test[1].num_frames() == 1);
  CHECK(test[0].frames[0] == v10.frames[8]);
  for (const auto& g : test[0].gt) CHECK(g.frame_index < 2);
  CHECK(train[0].gt.size() + test[0].gt.size() == v10.gt.size());

  sc.num_frames = 4;
  CHECK_THROWS_AS(split_train_test({generate_video(sc, 3)}), ContractError);
}

TEST_CASE("split halves are disjoint and cover the video") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng() % 40;
    Video v;
    v.name = "v";
    for (std::size_t t = 0; t < n; ++t) {
      v.frames.push_back(Tensor({1, 1, 1}, static_cast<double>(t)));
      v.gt.push_back(GroundTruth{static_cast<int>(t), 1, BBox{0, 0, 1, 1}, 1.0, 1});
    }
    const auto [train, test] = split_train_test({v});
    std::set<double> a, b;
    for (const auto& f : train[0].frames) a.insert(f[0]);
    for (const auto& f : test[0].frames) b.insert(f[0]);
    CHECK(train[0].num_frames() == n * 8 / 10);
    CHECK(a.size() + b.size() == n);
    for (double x : a) CHECK_FALSE(b.count(x));
  }
}

TEST_CASE("PPM frames and datasets round-trip on disk") {
  TempDir dir("data");
  SyntheticSceneConfig sc;
  sc.num_frames = 4;
  sc.num_videos = 2;
  const auto videos = generate_dataset(sc);
  write_ppm(dir.path / "one.ppm", videos[0].frames[0]);
  CHECK(read_ppm(dir.path / "one.ppm") == videos[0].frames[0]);
  CHECK_THROWS_AS(write_ppm(dir.path / "bad.ppm", Tensor({1, 4, 4})), ShapeError);

  write_dataset(dir.path / "ds", videos, scene_to_json(sc));
  CHECK(fs::exists(dir.path / "ds" / "scene.json"));
  CHECK(fs::exists(dir.path / "ds" / "seq_000" / "frame_00001.ppm"));
  CHECK(fs::exists(dir.path / "ds" / "seq_001" / "gt" / "gt.txt"));
  const auto back = load_dataset(dir.path / "ds");
  REQUIRE(back.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back[k].name == videos[k].name);
    CHECK(back[k].gt == videos[k].gt);
    REQUIRE(back[k].num_frames() == 4);
    for (std::size_t t = 0; t < 4; ++t) CHECK(back[k].frames[t] == videos[k].frames[t]);
  }
}
