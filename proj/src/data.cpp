#include "tdet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace tdet {

std::vector<std::vector<GroundTruth>> Video::gt_by_frame() const {
  std::vector<std::vector<GroundTruth>> out(frames.size());
  for (const auto& g : gt) {
    if (g.frame_index < 0) continue;
    const auto f = static_cast<std::size_t>(g.frame_index);
    if (f >= out.size()) out.resize(f + 1);
    out[f].push_back(g);
  }
  return out;
}

void SyntheticSceneConfig::validate() const {
  auto range_ok = [](const Range& r) { return r.lo > 0.0 && r.lo <= r.hi; };
  const double side = static_cast<double>(image_size);
  if (image_size < 8 || num_frames == 0 || num_videos == 0) {
    throw ContractError("scene: image_size >= 8, num_frames and num_videos > 0");
  }
  if (min_objects < 0 || min_objects > max_objects || min_occluders < 0 ||
      min_occluders > max_occluders) {
    throw ContractError("scene: count ranges must be non-empty and non-negative");
  }
  if (!range_ok(object_size) || object_size.hi > side) {
    throw ContractError("scene: object sizes must fit in the image");
  }
  if (speed.lo < 0.0 || speed.lo > speed.hi || jitter < 0.0) {
    throw ContractError("scene: invalid speed or jitter");
  }
  if (!(max_heading_deg >= 0.0 && max_heading_deg <= 90.0)) {
    throw ContractError("scene: max_heading_deg must lie in [0, 90]");
  }
  if (max_occluders > 0 && (!range_ok(occluder_width) || !range_ok(occluder_height) ||
                            occluder_width.hi > side || occluder_height.hi > side)) {
    throw ContractError("scene: occluder sizes must fit in the image");
  }
}

nlohmann::json scene_to_json(const SyntheticSceneConfig& c) {
  auto r = [](const Range& x) { return nlohmann::json::array({x.lo, x.hi}); };
  return {{"image_size", c.image_size},
          {"num_frames", c.num_frames},
          {"num_videos", c.num_videos},
          {"objects", {c.min_objects, c.max_objects}},
          {"object_size", r(c.object_size)},
          {"speed", r(c.speed)},
          {"max_heading_deg", c.max_heading_deg},
          {"jitter", c.jitter},
          {"occluders", {c.min_occluders, c.max_occluders}},
          {"occluder_width", r(c.occluder_width)},
          {"occluder_height", r(c.occluder_height)},
          {"object_occlusion", c.object_occlusion},
          {"seed", c.seed}};
}

SyntheticSceneConfig scene_from_json(const nlohmann::json& j) {
  SyntheticSceneConfig c;
  auto range = [&j](const char* key, Range def) {
    if (!j.contains(key)) return def;
    return Range{j.at(key).at(0).get<double>(), j.at(key).at(1).get<double>()};
  };
  c.image_size = j.value("image_size", c.image_size);
  c.num_frames = j.value("num_frames", c.num_frames);
  c.num_videos = j.value("num_videos", c.num_videos);
  if (j.contains("objects")) {
    c.min_objects = j["objects"].at(0).get<int>();
    c.max_objects = j["objects"].at(1).get<int>();
  }
  c.object_size = range("object_size", c.object_size);
  c.speed = range("speed", c.speed);
  c.max_heading_deg = j.value("max_heading_deg", c.max_heading_deg);
  c.jitter = j.value("jitter", c.jitter);
  if (j.contains("occluders")) {
    c.min_occluders = j["occluders"].at(0).get<int>();
    c.max_occluders = j["occluders"].at(1).get<int>();
  }
  c.occluder_width = range("occluder_width", c.occluder_width);
  c.occluder_height = range("occluder_height", c.occluder_height);
  c.object_occlusion = j.value("object_occlusion", c.object_occlusion);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

BBox intersect(const BBox& a, const BBox& b) {
  const double x0 = std::max(a.x, b.x);
  const double y0 = std::max(a.y, b.y);
  const double x1 = std::min(a.right(), b.right());
  const double y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0.0, 0.0};
  return {x0, y0, x1 - x0, y1 - y0};
}

// Area of the union of `rects`, by inclusion-exclusion. Branches whose
// running intersection is empty are pruned.
double union_area(const std::vector<BBox>& rects, std::size_t start, const BBox& acc,
                  int depth) {
  double total = 0.0;
  for (std::size_t i = start; i < rects.size(); ++i) {
    const BBox cur = depth == 0 ? rects[i] : intersect(acc, rects[i]);
    const double a = cur.area();
    if (a <= 0.0) continue;
    const double sign = (depth % 2 == 0) ? 1.0 : -1.0;
    total += sign * a + union_area(rects, i + 1, cur, depth + 1);
  }
  return total;
}

}  // namespace

double visible_fraction(const BBox& box, const std::vector<BBox>& occluders,
                        double image_w, double image_h) {
  const double total = box.area();
  if (total <= 0.0) return 0.0;
  const BBox inside = intersect(box, BBox{0.0, 0.0, image_w, image_h});
  if (inside.area() <= 0.0) return 0.0;
  std::vector<BBox> parts;
  for (const auto& o : occluders) {
    const BBox c = intersect(inside, o);
    if (c.area() > 0.0) parts.push_back(c);
  }
  const double hidden = union_area(parts, 0, BBox{}, 0);
  return std::clamp((inside.area() - hidden) / total, 0.0, 1.0);
}

namespace {

struct SceneObject {
  double cx, cy, vx, vy;
  double w, h;
  double color[3];
  double dark[3];
  int checker;
};

double uniform(std::mt19937_64& rng, Range r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

BBox pixel_box(const SceneObject& o) {
  return {std::floor(o.cx - 0.5 * o.w + 0.5), std::floor(o.cy - 0.5 * o.h + 0.5), o.w, o.h};
}

void fill_rect(Tensor& frame, const BBox& r, const double rgb[3]) {
  const auto n = static_cast<long>(frame.dim(1));
  const long x0 = std::max(0L, static_cast<long>(r.x));
  const long y0 = std::max(0L, static_cast<long>(r.y));
  const long x1 = std::min(n, static_cast<long>(r.x + r.w));
  const long y1 = std::min(n, static_cast<long>(r.y + r.h));
  for (int c = 0; c < 3; ++c) {
    for (long y = y0; y < y1; ++y) {
      for (long x = x0; x < x1; ++x) frame.at(c, y, x) = rgb[c];
    }
  }
}

void draw_object(Tensor& frame, const BBox& r, const SceneObject& o) {
  const auto n = static_cast<long>(frame.dim(1));
  const long bx = static_cast<long>(r.x);
  const long by = static_cast<long>(r.y);
  const long x0 = std::max(0L, bx);
  const long y0 = std::max(0L, by);
  const long x1 = std::min(n, static_cast<long>(r.x + r.w));
  const long y1 = std::min(n, static_cast<long>(r.y + r.h));
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) {
      const bool odd = (((x - bx) / o.checker) + ((y - by) / o.checker)) % 2 != 0;
      // One-pixel dark rim marks the object extent.
      const bool rim = x == bx || y == by || x == bx + static_cast<long>(r.w) - 1 ||
                       y == by + static_cast<long>(r.h) - 1;
      const double* rgb = (odd || rim) ? o.dark : o.color;
      for (int c = 0; c < 3; ++c) frame.at(c, y, x) = rgb[c];
    }
  }
}

// Shared by generation and hidden-fraction tuning; consumes the rng
// identically whether or not frames are rendered.
Video simulate_video(const SyntheticSceneConfig& cfg, std::uint64_t seed, bool render) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const double side = static_cast<double>(cfg.image_size);
  const std::size_t n = cfg.image_size;

  Tensor background({3, n, n});
  {
    double base[3];
    for (double& b : base) b = uniform(rng, {0.12, 0.3});
    std::uniform_real_distribution<double> noise(-0.04, 0.04);
    for (int c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) background.at(c, y, x) = base[c] + noise(rng);
      }
    }
  }

  std::vector<BBox> occluders;
  std::vector<std::array<double, 3>> occluder_colors;
  const int n_occ = uniform_int(rng, cfg.min_occluders, cfg.max_occluders);
  for (int k = 0; k < n_occ; ++k) {
    const double w = std::round(std::min(side, uniform(rng, cfg.occluder_width)));
    const double h = std::round(std::min(side, uniform(rng, cfg.occluder_height)));
    const double x = std::floor(uniform(rng, {0.0, side - w}) + 0.5);
    const double y = std::floor(uniform(rng, {0.0, side - h}) + 0.5);
    occluders.push_back({x, y, w, h});
    const double g = uniform(rng, {0.45, 0.65});
    occluder_colors.push_back({g, g, g});
  }

  std::vector<SceneObject> objects;
  const int n_obj = uniform_int(rng, cfg.min_objects, cfg.max_objects);
  const double pi = std::acos(-1.0);
  for (int k = 0; k < n_obj; ++k) {
    SceneObject o{};
    o.w = std::round(uniform(rng, cfg.object_size));
    o.h = std::round(uniform(rng, cfg.object_size));
    o.cx = uniform(rng, {0.5 * o.w, side - 0.5 * o.w});
    o.cy = uniform(rng, {0.5 * o.h, side - 0.5 * o.h});
    const double speed = uniform(rng, cfg.speed);
    const double heading = cfg.max_heading_deg * pi / 180.0;
    const double angle = uniform(rng, {-heading, heading});
    const double dir = uniform(rng, {0.0, 1.0}) < 0.5 ? -1.0 : 1.0;
    o.vx = dir * speed * std::cos(angle);
    o.vy = speed * std::sin(angle);
    const int hue = uniform_int(rng, 0, 5);
    static constexpr double kHues[6][3] = {{0.95, 0.2, 0.2}, {0.2, 0.9, 0.25},
                                           {0.25, 0.35, 0.95}, {0.95, 0.85, 0.2},
                                           {0.9, 0.3, 0.9}, {0.2, 0.9, 0.9}};
    for (int c = 0; c < 3; ++c) {
      o.color[c] = kHues[hue][c];
      o.dark[c] = 0.35 * kHues[hue][c];
    }
    o.checker = uniform_int(rng, 3, 5);
    objects.push_back(o);
  }

  Video video;
  std::normal_distribution<double> jitter(0.0, cfg.jitter > 0.0 ? cfg.jitter : 1.0);
  for (std::size_t t = 0; t < cfg.num_frames; ++t) {
    std::vector<BBox> boxes;
    for (const auto& o : objects) boxes.push_back(pixel_box(o));

    for (std::size_t k = 0; k < objects.size(); ++k) {
      std::vector<BBox> occ = occluders;
      if (cfg.object_occlusion) {
        for (std::size_t j = k + 1; j < objects.size(); ++j) occ.push_back(boxes[j]);
      }
      video.gt.push_back(GroundTruth{static_cast<int>(t), static_cast<int>(k + 1), boxes[k],
                                     visible_fraction(boxes[k], occ, side, side), 1});
    }

    if (render) {
      Tensor frame = background;
      for (std::size_t k = 0; k < objects.size(); ++k) draw_object(frame, boxes[k], objects[k]);
      for (std::size_t k = 0; k < occluders.size(); ++k) {
        fill_rect(frame, occluders[k], occluder_colors[k].data());
      }
      quantize_frame(frame);
      video.frames.push_back(std::move(frame));
    } else {
      video.frames.emplace_back();
    }

    for (auto& o : objects) {
      if (cfg.jitter > 0.0) {
        o.cx += o.vx + jitter(rng);
        o.cy += o.vy + jitter(rng);
      } else {
        o.cx += o.vx;
        o.cy += o.vy;
      }
      const double hw = 0.5 * o.w;
      const double hh = 0.5 * o.h;
      if (o.cx - hw < 0.0) { o.cx = hw; o.vx = std::abs(o.vx); }
      if (o.cx + hw > side) { o.cx = side - hw; o.vx = -std::abs(o.vx); }
      if (o.cy - hh < 0.0) { o.cy = hh; o.vy = std::abs(o.vy); }
      if (o.cy + hh > side) { o.cy = side - hh; o.vy = -std::abs(o.vy); }
    }
  }
  return video;
}

}  // namespace

void quantize_frame(Tensor& frame) {
  for (double& v : frame.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

Video generate_video(const SyntheticSceneConfig& cfg, std::uint64_t seed) {
  return simulate_video(cfg, seed, true);
}

namespace {

std::uint64_t video_seed(std::uint64_t base, std::size_t index) {
  // splitmix64 step so neighbouring seeds give unrelated streams
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string video_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%03zu", i);
  return buf;
}

}  // namespace

std::vector<Video> generate_dataset(const SyntheticSceneConfig& cfg) {
  std::vector<Video> out;
  for (std::size_t i = 0; i < cfg.num_videos; ++i) {
    Video v = generate_video(cfg, video_seed(cfg.seed, i));
    v.name = video_name(i);
    out.push_back(std::move(v));
  }
  return out;
}

double hidden_fraction(const std::vector<Video>& videos) {
  std::size_t total = 0, hidden = 0;
  for (const auto& v : videos) {
    for (const auto& g : v.gt) {
      ++total;
      if (g.visibility < 0.5) ++hidden;
    }
  }
  return total ? static_cast<double>(hidden) / static_cast<double>(total) : 0.0;
}

SyntheticSceneConfig tune_hidden_fraction(SyntheticSceneConfig cfg, double target,
                                          double tolerance) {
  cfg.validate();
  const double side = static_cast<double>(cfg.image_size);
  const Range w0 = cfg.occluder_width;
  const Range h0 = cfg.occluder_height;
  auto scaled = [&](double m) {
    SyntheticSceneConfig c = cfg;
    auto sc = [&](Range r) {
      return Range{std::clamp(r.lo * m, 1.0, side), std::clamp(r.hi * m, 1.0, side)};
    };
    c.occluder_width = sc(w0);
    c.occluder_height = sc(h0);
    return c;
  };
  auto measure = [&](const SyntheticSceneConfig& c) {
    std::vector<Video> vids;
    for (std::size_t i = 0; i < c.num_videos; ++i) {
      vids.push_back(simulate_video(c, video_seed(c.seed, i), false));
    }
    return hidden_fraction(vids);
  };

  double lo = 0.05, hi = side / std::max(1.0, std::min(w0.lo, h0.lo));
  SyntheticSceneConfig best = cfg;
  double best_err = std::abs(measure(cfg) - target);
  for (int it = 0; it < 30 && best_err > tolerance * 0.25; ++it) {
    const double mid = 0.5 * (lo + hi);
    const SyntheticSceneConfig c = scaled(mid);
    const double f = measure(c);
    if (std::abs(f - target) < best_err) {
      best_err = std::abs(f - target);
      best = c;
    }
    if (f < target) lo = mid; else hi = mid;
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T parse_field(std::string_view s, std::size_t line, const char* name) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    // MOT files sometimes write integer fields as floats ("1.0").
    if constexpr (std::is_integral_v<T>) {
      double d{};
      const auto [p2, e2] = std::from_chars(s.data(), s.data() + s.size(), d);
      if (e2 == std::errc{} && p2 == s.data() + s.size() && d == std::floor(d)) {
        return static_cast<T>(d);
      }
    }
    throw ParseError(line, std::string("bad ") + name + " field '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

MotParseResult parse_mot_gt(std::istream& in, const MotParseOptions& opts) {
  MotParseResult res;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 9) {
      throw ParseError(lineno, "expected 9 fields, got " + std::to_string(f.size()));
    }
    GroundTruth g;
    const int frame = parse_field<int>(f[0], lineno, "frame");
    if (frame < 1) throw ParseError(lineno, "frame numbers are 1-based");
    g.frame_index = frame - 1;
    g.track_id = parse_field<int>(f[1], lineno, "id");
    g.box.x = parse_field<double>(f[2], lineno, "bb_left");
    g.box.y = parse_field<double>(f[3], lineno, "bb_top");
    g.box.w = parse_field<double>(f[4], lineno, "bb_width");
    g.box.h = parse_field<double>(f[5], lineno, "bb_height");
    const double conf = parse_field<double>(f[6], lineno, "conf");
    g.class_id = parse_field<int>(f[7], lineno, "class");
    g.visibility = parse_field<double>(f[8], lineno, "visibility");
    if (!(g.box.w > 0.0 && g.box.h > 0.0)) {
      throw ParseError(lineno, "box width and height must be positive");
    }
    if (conf == 0.0) {
      ++res.dropped_conf0;
      continue;
    }
    if (!opts.classes.empty() && !opts.classes.count(g.class_id)) {
      ++res.dropped_class;
      continue;
    }
    if (g.visibility < 0.0 || g.visibility > 1.0) {
      g.visibility = std::clamp(g.visibility, 0.0, 1.0);
      ++res.clamped_visibility;
    }
    res.rows.push_back(g);
  }
  return res;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void emit_mot_gt(std::ostream& out, const std::vector<GroundTruth>& rows) {
  for (const auto& g : rows) {
    out << (g.frame_index + 1) << ',' << g.track_id << ',' << format_double(g.box.x) << ','
        << format_double(g.box.y) << ',' << format_double(g.box.w) << ','
        << format_double(g.box.h) << ",1," << g.class_id << ','
        << format_double(g.visibility) << '\n';
  }
}

void write_ppm(const std::filesystem::path& path, const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) {
    throw ShapeError("write_ppm: expected [3,H,W], got " + shape_str(frame.shape()));
  }
  const std::size_t h = frame.dim(1), w = frame.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::string pixels(w * h * 3, '\0');
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::round(std::clamp(frame.at(c, y, x), 0.0, 1.0) * 255.0);
        pixels[(y * w + x) * 3 + c] = static_cast<char>(static_cast<unsigned char>(v));
      }
    }
  }
  out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto token = [&in, &path]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    if (t.empty()) throw std::runtime_error("truncated PPM header in " + path.string());
    return t;
  };
  if (token() != "P6") throw std::runtime_error(path.string() + " is not a binary PPM");
  const std::size_t w = std::stoul(token());
  const std::size_t h = std::stoul(token());
  if (std::stoul(token()) != 255) throw std::runtime_error("only 8-bit PPM supported");
  std::string pixels(w * h * 3, '\0');
  if (!in.read(pixels.data(), static_cast<std::streamsize>(pixels.size()))) {
    throw std::runtime_error("truncated PPM payload in " + path.string());
  }
  Tensor frame({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        frame.at(c, y, x) =
            static_cast<unsigned char>(pixels[(y * w + x) * 3 + c]) / 255.0;
      }
    }
  }
  return frame;
}

void write_dataset(const std::filesystem::path& root, const std::vector<Video>& videos,
                   const nlohmann::json& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  {
    std::ofstream out(root / "scene.json");
    out << scene.dump(2) << '\n';
  }
  for (const auto& v : videos) {
    const fs::path dir = root / v.name;
    fs::create_directories(dir / "gt");
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.ppm", t + 1);
      write_ppm(dir / name, v.frames[t]);
    }
    std::ofstream gt(dir / "gt" / "gt.txt");
    emit_mot_gt(gt, v.gt);
  }
}

std::vector<Video> load_dataset(const std::filesystem::path& root,
                                const MotParseOptions& opts) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw std::runtime_error("no dataset at " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "gt" / "gt.txt")) dirs.push_back(e.path());
  }
  if (dirs.empty()) throw std::runtime_error("no videos with gt/gt.txt under " + root.string());
  std::sort(dirs.begin(), dirs.end());
  std::vector<Video> out;
  for (const auto& dir : dirs) {
    Video v;
    v.name = dir.filename().string();
    std::ifstream gt(dir / "gt" / "gt.txt");
    try {
      v.gt = parse_mot_gt(gt, opts).rows;
    } catch (const ParseError& e) {
      throw std::runtime_error((dir / "gt" / "gt.txt").string() + ": " + e.what());
    }
    for (std::size_t t = 1;; ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.ppm", t);
      if (!fs::exists(dir / name)) break;
      v.frames.push_back(read_ppm(dir / name));
    }
    out.push_back(std::move(v));
  }
  return out;
}

Video slice_video(const Video& v, std::size_t begin, std::size_t end) {
  Video out;
  out.name = v.name;
  for (std::size_t t = begin; t < end && t < v.frames.size(); ++t) out.frames.push_back(v.frames[t]);
  for (const auto& g : v.gt) {
    if (g.frame_index >= static_cast<int>(begin) && g.frame_index < static_cast<int>(end)) {
      GroundTruth r = g;
      r.frame_index -= static_cast<int>(begin);
      out.gt.push_back(r);
    }
  }
  return out;
}

std::pair<std::vector<Video>, std::vector<Video>> split_train_test(
    const std::vector<Video>& videos) {
  std::pair<std::vector<Video>, std::vector<Video>> out;
  for (const auto& v : videos) {
    const std::size_t n = v.num_frames();
    if (n < 5) {
      throw ContractError("split_train_test: video " + v.name + " has fewer than 5 frames");
    }
    const std::size_t cut = (n * 8) / 10;
    out.first.push_back(slice_video(v, 0, cut));
    out.second.push_back(slice_video(v, cut, n));
  }
  return out;
}

}  // namespace tdet
