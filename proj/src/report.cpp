#include "tdet/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tdet/data.hpp"

namespace tdet {
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != columns) {
      throw ParseError(line_no, path.string() + ": expected " + std::to_string(columns) +
                                    " fields");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("bad number: " + s);
  }
  return v;
}

std::size_t to_size(const std::string& s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("bad integer: " + s);
  }
  return v;
}

std::string curve_csv(const std::vector<PRPoint>& curve) {
  std::string s = "rank,confidence,precision,recall\n";
  for (const auto& p : curve) {
    s += std::to_string(p.rank) + ',' + format_double(p.confidence) + ',' +
         format_double(p.precision) + ',' + format_double(p.recall) + '\n';
  }
  return s;
}

std::vector<PRPoint> read_curve(const fs::path& path) {
  std::vector<PRPoint> out;
  for (const auto& f : read_csv(path, 4)) {
    out.push_back({to_size(f[0]), to_double(f[1]), to_double(f[2]), to_double(f[3])});
  }
  return out;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b"};

}  // namespace

nlohmann::json report_to_json(const EvalReport& r) {
  return nlohmann::json{
      {"mode", r.mode},
      {"ap_all", r.ap_all},
      {"ap_hidden", r.ap_hidden},
      {"ap_visible", r.ap_visible},
      {"tp", r.tp},
      {"fp", r.fp},
      {"fn", r.fn},
      {"tp_hidden", r.tp_hidden},
      {"tp_visible", r.tp_visible},
      {"total_gt", r.total_gt},
      {"hidden_gt", r.hidden_gt},
      {"num_detections", r.num_detections},
      {"num_frames", r.num_frames},
      {"hidden_fraction", r.hidden_fraction},
      {"final_recall", r.final_recall},
      {"final_visible_share", r.proneness.empty() ? 0.0 : r.proneness.back().visible_share},
  };
}

void write_report(const fs::path& dir, const EvalReport& r) {
  fs::create_directories(dir);
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_text(dir / "curve_all.csv", curve_csv(r.curve_all));
  write_text(dir / "curve_hidden.csv", curve_csv(r.curve_hidden));
  write_text(dir / "curve_visible.csv", curve_csv(r.curve_visible));
  std::string p = "rank,recall,visible_share\n";
  for (const auto& pt : r.proneness) {
    p += std::to_string(pt.rank) + ',' + format_double(pt.recall) + ',' +
         format_double(pt.visible_share) + '\n';
  }
  write_text(dir / "proneness.csv", p);
}

EvalReport read_report(const fs::path& dir) {
  std::ifstream in(dir / "report.json");
  if (!in) throw std::runtime_error("cannot read " + (dir / "report.json").string());
  const auto j = nlohmann::json::parse(in);
  EvalReport r;
  r.mode = j.at("mode").get<std::string>();
  r.ap_all = j.at("ap_all").get<double>();
  r.ap_hidden = j.at("ap_hidden").get<double>();
  r.ap_visible = j.at("ap_visible").get<double>();
  r.tp = j.at("tp").get<std::size_t>();
  r.fp = j.at("fp").get<std::size_t>();
  r.fn = j.at("fn").get<std::size_t>();
  r.tp_hidden = j.at("tp_hidden").get<std::size_t>();
  r.tp_visible = j.at("tp_visible").get<std::size_t>();
  r.total_gt = j.at("total_gt").get<std::size_t>();
  r.hidden_gt = j.at("hidden_gt").get<std::size_t>();
  r.num_detections = j.at("num_detections").get<std::size_t>();
  r.num_frames = j.at("num_frames").get<std::size_t>();
  r.hidden_fraction = j.at("hidden_fraction").get<double>();
  r.final_recall = j.at("final_recall").get<double>();
  r.curve_all = read_curve(dir / "curve_all.csv");
  r.curve_hidden = read_curve(dir / "curve_hidden.csv");
  r.curve_visible = read_curve(dir / "curve_visible.csv");
  for (const auto& f : read_csv(dir / "proneness.csv", 3)) {
    r.proneness.push_back({to_size(f[0]), to_double(f[1]), to_double(f[2])});
  }
  return r;
}

std::string render_svg(const std::vector<CurveSeries>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
  constexpr double kW = 480, kH = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return fixed(kLeft + x * pw, 2); };
  auto py = [&](double y) { return fixed(kTop + (1.0 - y) * ph, 2); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(title) << "</text>\n";
  for (int i = 0; i <= 10; ++i) {
    const double t = i / 10.0;
    s << "<line x1=\"" << px(t) << "\" y1=\"" << py(0) << "\" x2=\"" << px(t) << "\" y2=\""
      << py(1) << "\" stroke=\"#eee\"/>\n";
    s << "<line x1=\"" << px(0) << "\" y1=\"" << py(t) << "\" x2=\"" << px(1) << "\" y2=\""
      << py(t) << "\" stroke=\"#eee\"/>\n";
    if (i % 2 == 0) {
      s << "<text x=\"" << px(t) << "\" y=\"" << fixed(kTop + ph + 16, 2)
        << "\" text-anchor=\"middle\">" << fixed(t, 1) << "</text>\n";
      s << "<text x=\"" << fixed(kLeft - 6, 2) << "\" y=\"" << py(t)
        << "\" text-anchor=\"end\" dominant-baseline=\"middle\">" << fixed(t, 1) << "</text>\n";
    }
  }
  s << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<text x=\"" << fixed(kLeft + pw / 2, 2) << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  s << "<text x=\"16\" y=\"" << fixed(kTop + ph / 2, 2)
    << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << fixed(kTop + ph / 2, 2)
    << ")\">" << escape_xml(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].points.size(); ++i) {
      if (i) s << ' ';
      s << px(series[k].points[i].first) << ',' << py(series[k].points[i].second);
    }
    s << "\"/>\n";
    const double ly = kTop + 16 + 16.0 * static_cast<double>(k);
    s << "<line x1=\"" << fixed(kLeft + pw - 120, 2) << "\" y1=\"" << fixed(ly, 2) << "\" x2=\""
      << fixed(kLeft + pw - 100, 2) << "\" y2=\"" << fixed(ly, 2) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << fixed(kLeft + pw - 95, 2) << "\" y=\"" << fixed(ly, 2)
      << "\" dominant-baseline=\"middle\">" << escape_xml(series[k].label) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

CurveSeries pr_series(const std::string& label, const std::vector<PRPoint>& curve) {
  CurveSeries c{label, {}};
  for (const auto& p : curve) c.points.emplace_back(p.recall, p.precision);
  return c;
}

CurveSeries proneness_series(const std::string& label,
                             const std::vector<PronenessPoint>& curve) {
  CurveSeries c{label, {}};
  for (const auto& p : curve) c.points.emplace_back(p.recall, p.visible_share);
  return c;
}

void write_plots(const fs::path& dir, const EvalReport& r, const std::string& label) {
  write_compare_plots(dir, {label}, {r});
}

std::string compare_table(const std::vector<std::string>& labels,
                          const std::vector<EvalReport>& reports) {
  if (labels.size() != reports.size()) throw std::invalid_argument("compare_table: size mismatch");
  std::ostringstream s;
  auto row = [&](const std::string& name, auto get) {
    s << name;
    for (std::size_t i = name.size(); i < 16; ++i) s << ' ';
    for (const auto& r : reports) {
      std::string v = get(r);
      for (std::size_t i = v.size(); i < 14; ++i) s << ' ';
      s << v;
    }
    s << '\n';
  };
  row("", [&, i = std::size_t{0}](const EvalReport&) mutable { return labels[i++]; });
  row("mode", [](const EvalReport& r) { return r.mode; });
  row("ap_all", [](const EvalReport& r) { return fixed(r.ap_all, 4); });
  row("ap_visible", [](const EvalReport& r) { return fixed(r.ap_visible, 4); });
  row("ap_hidden", [](const EvalReport& r) { return fixed(r.ap_hidden, 4); });
  row("final_recall", [](const EvalReport& r) { return fixed(r.final_recall, 4); });
  row("tp", [](const EvalReport& r) { return std::to_string(r.tp); });
  row("tp_hidden", [](const EvalReport& r) { return std::to_string(r.tp_hidden); });
  row("fp", [](const EvalReport& r) { return std::to_string(r.fp); });
  row("fn", [](const EvalReport& r) { return std::to_string(r.fn); });
  row("hidden_fraction", [](const EvalReport& r) { return fixed(r.hidden_fraction, 4); });
  return s.str();
}

void write_compare_plots(const fs::path& dir, const std::vector<std::string>& labels,
                         const std::vector<EvalReport>& reports) {
  if (labels.size() != reports.size()) {
    throw std::invalid_argument("write_compare_plots: size mismatch");
  }
  fs::create_directories(dir);
  const std::pair<const char*, std::vector<PRPoint> EvalReport::*> variants[] = {
      {"all", &EvalReport::curve_all},
      {"hidden", &EvalReport::curve_hidden},
      {"visible", &EvalReport::curve_visible}};
  for (const auto& [name, member] : variants) {
    std::vector<CurveSeries> series;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const double ap = name == std::string("all")      ? reports[i].ap_all
                        : name == std::string("hidden") ? reports[i].ap_hidden
                                                        : reports[i].ap_visible;
      series.push_back(pr_series(labels[i] + " (AP " + fixed(ap, 3) + ")", reports[i].*member));
    }
    write_text(dir / (std::string("pr_") + name + ".svg"),
               render_svg(series, std::string("Precision x Recall (") + name + ")", "Recall",
                          "Precision"));
  }
  std::vector<CurveSeries> series;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    series.push_back(proneness_series(labels[i], reports[i].proneness));
  }
  write_text(dir / "proneness.svg",
             render_svg(series, "TP_visible / TP vs Recall", "Recall", "TP_visible / TP"));
}

}  // namespace tdet
