#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

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

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = tdet::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string s(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("version and help exit cleanly") {
  const auto v = run({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(tdet::cli::kVersion) != std::string::npos);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"train", "--help"}).code == 0);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  const auto bad = run({"gen", "--out", "x", "--bogus"});
  CHECK(bad.code == 1);
  CHECK_FALSE(bad.err.empty());
  CHECK(run({"gen"}).code == 1);
  CHECK(run({"eval", "--model", "/nonexistent.ckpt", "--data", ".", "--report", "r"}).code == 1);
  CHECK(run({"eval", "--model", "x", "--data", ".", "--report", "r", "--mode", "fast"}).code == 1);
}

TEST_CASE("runtime failures exit with 2") {
  TempDir dir("cli_fail");
  {
    std::ofstream out(dir.path / "scene.json");
    out << "{ not json";
  }
  const auto r = run({"gen", "--config", s(dir.path / "scene.json"), "--out", s(dir.path / "d")});
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);

  // A directory that is not a dataset.
  fs::create_directories(dir.path / "empty");
  CHECK(run({"split", "--data", s(dir.path / "empty"), "--train-out", s(dir.path / "a"),
             "--test-out", s(dir.path / "b")})
            .code == 2);
}

TEST_CASE("gen, split, train, eval, compare and plot") {
  TempDir dir("cli_flow");
  const fs::path data = dir.path / "data", run1 = dir.path / "run1";
  REQUIRE(run({"gen", "--out", s(data), "--seed", "7", "--videos", "2", "--frames", "12"}).code == 0);
  CHECK(fs::exists(data / "seq_000" / "frame_00012.ppm"));
  CHECK(fs::exists(data / "seq_001" / "gt" / "gt.txt"));
  CHECK(fs::exists(data / "scene.json"));
  CHECK(fs::exists(data / "manifest.json"));

  REQUIRE(run({"split", "--data", s(data), "--train-out", s(dir.path / "tr"), "--test-out",
               s(dir.path / "te")})
              .code == 0);
  CHECK(fs::exists(dir.path / "tr" / "seq_000" / "frame_00009.ppm"));
  CHECK_FALSE(fs::exists(dir.path / "tr" / "seq_000" / "frame_00010.ppm"));
  CHECK(fs::exists(dir.path / "te" / "seq_000" / "frame_00003.ppm"));

  const auto t = run({"train", "--data", s(data), "--portion", "train", "--epochs", "2",
                      "--seq-len", "3", "--steps-per-epoch", "4", "--pretrain-steps", "10",
                      "--out", s(run1)});
  REQUIRE(t.code == 0);
  for (const char* f : {"base.ckpt", "epoch_01.ckpt", "epoch_02.ckpt", "best.ckpt", "final.ckpt",
                        "loss.csv", "pretrain_loss.csv", "config.json", "manifest.json"}) {
    CHECK(fs::exists(run1 / f));
  }
  CHECK(slurp(run1 / "loss.csv").rfind("epoch,step,loss\n", 0) == 0);

  // Training again from the saved base skips pretraining.
  CHECK(run({"train", "--data", s(data), "--base", s(run1 / "base.ckpt"), "--epochs", "1",
             "--seq-len", "2", "--steps-per-epoch", "2", "--out", s(dir.path / "run2")})
            .code == 0);
  CHECK_FALSE(fs::exists(dir.path / "run2" / "pretrain_loss.csv"));

  for (const char* mode : {"plain", "sequenced"}) {
    const auto e = run({"eval", "--model", s(run1 / "best.ckpt"), "--data", s(data), "--portion",
                        "test", "--mode", mode, "--report", s(dir.path / mode)});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("ap_hidden") != std::string::npos);
    CHECK(fs::exists(dir.path / mode / "report.json"));
    CHECK(fs::exists(dir.path / mode / "curve_visible.csv"));
    CHECK(fs::exists(dir.path / mode / "pr_all.svg"));
  }

  const auto c = run({"compare", s(dir.path / "plain"), s(dir.path / "sequenced"), "--out",
                      s(dir.path / "cmp")});
  REQUIRE(c.code == 0);
  CHECK(c.out.find("plain") != std::string::npos);
  CHECK(fs::exists(dir.path / "cmp" / "pr_hidden.svg"));
  CHECK(run({"compare", s(dir.path / "plain"), s(dir.path / "sequenced"), "--labels", "a",
             "--out", s(dir.path / "cmp")})
            .code == 1);
  CHECK(run({"compare", s(dir.path / "plain")}).code == 1);

  CHECK(run({"plot", "--report", s(dir.path / "plain"), "--out", s(dir.path / "pl")}).code == 0);
  CHECK(fs::exists(dir.path / "pl" / "proneness.svg"));
}
