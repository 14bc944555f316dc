#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tdet/report.hpp"

using namespace tdet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("tdet_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

EvalReport sample_report(std::uint64_t seed, const std::string& mode) {
  std::mt19937_64 rng(seed);
  oracle::Instance in;
  while (in.gts.size() < 3 || in.dets.size() < 5) in = oracle::random_instance(rng);
  return build_report(match_detections(in.dets, in.gts), mode);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("report files round-trip exactly") {
  TempDir dir("report");
  const EvalReport r = sample_report(1, "sequenced");
  write_report(dir.path, r);
  for (const char* f : {"report.json", "curve_all.csv", "curve_hidden.csv", "curve_visible.csv",
                        "proneness.csv"}) {
    CHECK(fs::exists(dir.path / f));
  }
  CHECK(slurp(dir.path / "curve_all.csv").rfind("rank,confidence,precision,recall\n", 0) == 0);
  CHECK(slurp(dir.path / "proneness.csv").rfind("rank,recall,visible_share\n", 0) == 0);

  const EvalReport back = read_report(dir.path);
  CHECK(back.mode == r.mode);
  CHECK(back.ap_all == r.ap_all);
  CHECK(back.ap_hidden == r.ap_hidden);
  CHECK(back.ap_visible == r.ap_visible);
  CHECK(back.tp == r.tp);
  CHECK(back.fp == r.fp);
  CHECK(back.fn == r.fn);
  CHECK(back.total_gt == r.total_gt);
  CHECK(back.hidden_fraction == r.hidden_fraction);
  REQUIRE(back.curve_all.size() == r.curve_all.size());
  for (std::size_t k = 0; k < r.curve_all.size(); ++k) {
    CHECK(back.curve_all[k].rank == r.curve_all[k].rank);
    CHECK(back.curve_all[k].confidence == r.curve_all[k].confidence);
    CHECK(back.curve_all[k].precision == r.curve_all[k].precision);
    CHECK(back.curve_all[k].recall == r.curve_all[k].recall);
  }
  REQUIRE(back.proneness.size() == r.proneness.size());
  for (std::size_t k = 0; k < r.proneness.size(); ++k) {
    CHECK(back.proneness[k].visible_share == r.proneness[k].visible_share);
  }

  // Writing the read-back report reproduces the same bytes.
  TempDir again("report_again");
  write_report(again.path, back);
  for (const char* f : {"report.json", "curve_all.csv", "curve_hidden.csv", "proneness.csv"}) {
    CHECK(slurp(again.path / f) == slurp(dir.path / f));
  }
}

TEST_CASE("report JSON carries the split identity") {
  const EvalReport r = sample_report(2, "plain");
  const auto j = report_to_json(r);
  CHECK(j.at("mode") == "plain");
  CHECK(j.at("tp").get<std::size_t>() ==
        j.at("tp_hidden").get<std::size_t>() + j.at("tp_visible").get<std::size_t>());
  CHECK(j.at("ap_all").get<double>() == r.ap_all);
}

TEST_CASE("malformed curve files are rejected") {
  TempDir dir("report_bad");
  write_report(dir.path, sample_report(3, "plain"));
  {
    std::ofstream out(dir.path / "curve_hidden.csv", std::ios::app);
    out << "9,0.5,0.25\n";
  }
  CHECK_THROWS_AS(read_report(dir.path), ParseError);
  CHECK_THROWS(read_report(dir.path / "missing"));
}

TEST_CASE("SVG rendering") {
  const CurveSeries a{"plain", {{0.0, 1.0}, {0.5, 0.5}, {1.0, 0.25}}};
  const CurveSeries b{"sequenced <T>", {{0.0, 1.0}, {1.0, 0.75}}};
  const std::string svg = render_svg({a, b}, "PR all", "recall", "precision");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t lines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos;
       p = svg.find("<polyline", p + 1)) {
    ++lines;
  }
  CHECK(lines == 2);
  CHECK(svg.find("sequenced &lt;T&gt;") != std::string::npos);
  CHECK(svg.find("PR all") != std::string::npos);

  const EvalReport r = sample_report(4, "plain");
  const auto s = pr_series("x", r.curve_all);
  REQUIRE(s.points.size() == r.curve_all.size());
  CHECK(s.points[0].first == r.curve_all[0].recall);
  CHECK(s.points[0].second == r.curve_all[0].precision);
}

TEST_CASE("plots and comparison outputs") {
  TempDir dir("plots");
  const EvalReport p = sample_report(5, "plain");
  const EvalReport q = sample_report(6, "sequenced");
  write_plots(dir.path, p, "plain");
  for (const char* f : {"pr_all.svg", "pr_hidden.svg", "pr_visible.svg", "proneness.svg"}) {
    CHECK(fs::exists(dir.path / f));
  }
  write_compare_plots(dir.path / "cmp", {"plain", "sequenced"}, {p, q});
  CHECK(fs::exists(dir.path / "cmp" / "pr_hidden.svg"));

  const std::string table = compare_table({"plain", "sequenced"}, {p, q});
  CHECK(table.find("plain") != std::string::npos);
  CHECK(table.find("sequenced") != std::string::npos);
  CHECK(table.find("hidden") != std::string::npos);
}
