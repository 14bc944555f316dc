#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdet/checkpoint.hpp"
#include "tdet/data.hpp"
#include "tdet/detector.hpp"
#include "tdet/eval.hpp"
#include "tdet/report.hpp"
#include "tdet/trainer.hpp"

namespace tdet::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

void write_manifest(const fs::path& dir, const std::string& command, const json& options) {
  fs::create_directories(dir);
  write_json(dir / "manifest.json",
             json{{"tool", "tdet"}, {"version", kVersion}, {"command", command},
                  {"options", options}});
}

std::vector<Video> select_portion(std::vector<Video> videos, const std::string& portion) {
  if (portion == "all") return videos;
  auto [train, test] = split_train_test(videos);
  return portion == "train" ? train : test;
}

void write_loss_csv(const fs::path& path, const std::vector<StepRecord>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,step,loss\n";
  for (const auto& r : trace) out << r.epoch << ',' << r.step << ',' << format_double(r.loss) << '\n';
}

json train_config_json(const TrainConfig& c) {
  return json{{"seq_len", c.seq_len},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"steps_per_epoch", c.steps_per_epoch},
              {"flip_probability", c.flip_probability},
              {"seed", c.seed},
              {"lambda_coord", c.loss.lambda_coord},
              {"lambda_noobj", c.loss.lambda_noobj},
              {"ignore_iou", c.loss.ignore_iou}};
}

struct GenOptions {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> videos, frames;
  std::optional<double> hidden_target;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
  SyntheticSceneConfig cfg;
  if (!o.config.empty()) cfg = scene_from_json(read_json(o.config));
  if (o.seed) cfg.seed = *o.seed;
  if (o.videos) cfg.num_videos = *o.videos;
  if (o.frames) cfg.num_frames = *o.frames;
  cfg.validate();
  if (o.hidden_target) cfg = tune_hidden_fraction(cfg, *o.hidden_target);
  const auto videos = generate_dataset(cfg);
  write_dataset(o.out, videos, scene_to_json(cfg));
  write_manifest(o.out, "gen",
                 json{{"config", o.config}, {"scene", scene_to_json(cfg)},
                      {"hidden_target", o.hidden_target ? json(*o.hidden_target) : json()}});
  out << "wrote " << videos.size() << " videos to " << o.out << ", hidden fraction "
      << hidden_fraction(videos) << '\n';
  return 0;
}

struct SplitOptions {
  std::string data, train_out, test_out;
};

int cmd_split(const SplitOptions& o, std::ostream& out) {
  const auto videos = load_dataset(o.data);
  json scene = json::object();
  if (fs::exists(fs::path(o.data) / "scene.json")) scene = read_json(fs::path(o.data) / "scene.json");
  auto [train, test] = split_train_test(videos);
  write_dataset(o.train_out, train, scene);
  write_dataset(o.test_out, test, scene);
  const json opts{{"data", o.data}, {"train_out", o.train_out}, {"test_out", o.test_out}};
  write_manifest(o.train_out, "split", opts);
  write_manifest(o.test_out, "split", opts);
  out << "split " << videos.size() << " videos into " << o.train_out << " and " << o.test_out
      << '\n';
  return 0;
}

struct TrainOptions {
  std::string data, out, base, portion = "all";
  TrainConfig train;
  std::size_t pretrain_steps = PretrainConfig{}.steps;
  double pretrain_lr = PretrainConfig{}.learning_rate;
  double pretrain_final_lr = PretrainConfig{}.final_lr_fraction;
  double min_visibility = PretrainConfig{}.min_visibility;
};

int cmd_train(const TrainOptions& o, std::ostream& out) {
  o.train.validate();
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const auto videos = select_portion(load_dataset(o.data), o.portion);

  ModelParams base;
  if (!o.base.empty()) {
    base = load_checkpoint(o.base);
  } else {
    std::mt19937_64 rng(o.train.seed);
    PretrainConfig pc;
    pc.steps = o.pretrain_steps;
    pc.learning_rate = o.pretrain_lr;
    pc.final_lr_fraction = o.pretrain_final_lr;
    pc.min_visibility = o.min_visibility;
    pc.seed = o.train.seed;
    pc.loss = o.train.loss;
    const auto pre = pretrain_base(videos, pc, init_base_model(DetectorConfig{}, rng));
    base = pre.params;
    write_loss_csv(dir / "pretrain_loss.csv", pre.trace);
    out << "pretrained base network: " << pre.trace.size() << " steps, mean loss "
        << (pre.epoch_loss.empty() ? 0.0 : pre.epoch_loss.back()) << '\n';
  }
  save_checkpoint(dir / "base.ckpt", base);

  const ModelParams temporal = transfer_weights(base, o.train.seed);
  write_json(dir / "config.json",
             json{{"detector", config_to_json(temporal.config)},
                  {"train", train_config_json(o.train)},
                  {"pretrain",
                   {{"base", o.base},
                    {"steps", o.pretrain_steps},
                    {"learning_rate", o.pretrain_lr},
                    {"final_lr_fraction", o.pretrain_final_lr},
                    {"min_visibility", o.min_visibility}}},
                  {"data", o.data},
                  {"portion", o.portion}});
  write_manifest(dir, "train",
                 json{{"data", o.data}, {"portion", o.portion}, {"base", o.base},
                      {"train", train_config_json(o.train)}, {"pretrain_steps", o.pretrain_steps},
                      {"pretrain_lr", o.pretrain_lr},
                      {"pretrain_final_lr", o.pretrain_final_lr}, {"min_visibility", o.min_visibility}});

  double best = std::numeric_limits<double>::infinity();
  const auto result = train(videos, o.train, temporal,
                            [&](std::size_t epoch, double loss, const ModelParams& p) {
                              char name[32];
                              std::snprintf(name, sizeof name, "epoch_%02zu.ckpt", epoch + 1);
                              save_checkpoint(dir / name, p);
                              if (loss < best) {
                                best = loss;
                                save_checkpoint(dir / "best.ckpt", p);
                              }
                              out << "epoch " << epoch + 1 << " mean loss " << loss << '\n';
                            });
  save_checkpoint(dir / "final.ckpt", result.params);
  write_loss_csv(dir / "loss.csv", result.trace);
  out << "trained " << result.trace.size() << " steps (" << result.skipped_steps
      << " skipped, " << result.skipped_gt << " colliding boxes)\n";
  return 0;
}

struct EvalOptionsCli {
  std::string model, data, report, mode = "sequenced", portion = "all";
  std::size_t threads = 0;
};

int cmd_eval(const EvalOptionsCli& o, std::ostream& out) {
  const ModelParams model = load_checkpoint(o.model);
  const auto videos = select_portion(load_dataset(o.data), o.portion);
  EvalOptions opts;
  opts.threads = o.threads;
  const Mode mode = o.mode == "plain" ? Mode::plain : Mode::sequenced;
  const EvalReport r = evaluate(model, videos, mode, opts);
  write_report(o.report, r);
  write_plots(o.report, r, o.mode);
  write_manifest(o.report, "eval",
                 json{{"model", o.model}, {"data", o.data}, {"mode", o.mode},
                      {"portion", o.portion}});
  out << compare_table({o.mode}, {r});
  return 0;
}

struct CompareOptions {
  std::vector<std::string> reports, labels;
  std::string out = "compare";
};

int cmd_compare(const CompareOptions& o, std::ostream& out) {
  std::vector<EvalReport> reports;
  std::vector<std::string> labels = o.labels;
  if (!labels.empty() && labels.size() != o.reports.size()) {
    throw CLI::ValidationError("--labels", "needs one label per report");
  }
  for (const auto& d : o.reports) {
    reports.push_back(read_report(d));
    if (o.labels.empty()) labels.push_back(fs::path(d).filename().string() + ":" + reports.back().mode);
  }
  out << compare_table(labels, reports);
  write_compare_plots(o.out, labels, reports);
  return 0;
}

struct PlotOptions {
  std::string report, out, label;
};

int cmd_plot(const PlotOptions& o, std::ostream& out) {
  const EvalReport r = read_report(o.report);
  const std::string dir = o.out.empty() ? o.report : o.out;
  write_plots(dir, r, o.label.empty() ? r.mode : o.label);
  out << "wrote plots to " << dir << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal single-stage detector: data generation, training, evaluation"};
  app.name("tdet");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic occlusion dataset");
  g->add_option("--config", gen.config, "Scene config JSON");
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--seed", gen.seed, "Scene seed");
  g->add_option("--videos", gen.videos, "Number of videos");
  g->add_option("--frames", gen.frames, "Frames per video");
  g->add_option("--hidden-target", gen.hidden_target,
                "Rescale occluders to reach this fraction of boxes with visibility < 0.5")
      ->check(CLI::Range(0.0, 1.0));

  SplitOptions split;
  auto* sp = app.add_subcommand("split", "Per-video 80/20 temporal split");
  sp->add_option("--data", split.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sp->add_option("--train-out", split.train_out, "Training dataset directory")->required();
  sp->add_option("--test-out", split.test_out, "Test dataset directory")->required();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Pretrain (or load) a base network, transfer, train");
  t->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--portion", tr.portion, "Video portion to use")
      ->check(CLI::IsMember({"all", "train", "test"}));
  t->add_option("--base", tr.base, "Base network checkpoint; pretrained when omitted")
      ->check(CLI::ExistingFile);
  t->add_option("--epochs", tr.train.epochs, "Epochs")->check(CLI::PositiveNumber);
  t->add_option("--seq-len", tr.train.seq_len, "Sequence length")->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->check(CLI::NonNegativeNumber);
  t->add_option("--steps-per-epoch", tr.train.steps_per_epoch, "Steps per epoch (0: one per training frame)");
  t->add_option("--flip", tr.train.flip_probability, "Horizontal flip probability")
      ->check(CLI::Range(0.0, 1.0));
  t->add_option("--seed", tr.train.seed, "Seed");
  t->add_option("--pretrain-steps", tr.pretrain_steps, "Base network pretraining steps");
  t->add_option("--pretrain-lr", tr.pretrain_lr, "Base network learning rate");
  t->add_option("--pretrain-final-lr", tr.pretrain_final_lr,
                "Final pretraining learning rate as a fraction of --pretrain-lr")
      ->check(CLI::Range(0.0, 1.0));
  t->add_option("--min-visibility", tr.min_visibility,
                "Boxes less visible than this are unannotated during pretraining")
      ->check(CLI::Range(0.0, 1.0));

  EvalOptionsCli ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--model", ev.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  e->add_option("--mode", ev.mode, "Inference mode")->check(CLI::IsMember({"plain", "sequenced"}));
  e->add_option("--report", ev.report, "Report directory")->required();
  e->add_option("--portion", ev.portion, "Video portion to use")
      ->check(CLI::IsMember({"all", "train", "test"}));
  e->add_option("--threads", ev.threads, "Worker threads (default TDET_THREADS)");

  CompareOptions cmp;
  auto* c = app.add_subcommand("compare", "AP table and overlaid curves for several reports");
  c->add_option("reports", cmp.reports, "Report directories")->required()->expected(2, -1)
      ->check(CLI::ExistingDirectory);
  c->add_option("--labels", cmp.labels, "Series labels");
  c->add_option("--out", cmp.out, "Directory for overlaid SVGs");

  PlotOptions pl;
  auto* p = app.add_subcommand("plot", "Render SVG plots for a report");
  p->add_option("--report", pl.report, "Report directory")->required()->check(CLI::ExistingDirectory);
  p->add_option("--out", pl.out, "Output directory (default: the report directory)");
  p->add_option("--label", pl.label, "Series label");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (sp->parsed()) return cmd_split(split, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (c->parsed()) return cmd_compare(cmp, out);
    if (p->parsed()) return cmd_plot(pl, out);
  } catch (const CLI::ValidationError& ex) {
    err << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace tdet::cli
