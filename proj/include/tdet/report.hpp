#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdet/eval.hpp"

namespace tdet {

/// Scalars and counts of a report (no curves).
nlohmann::json report_to_json(const EvalReport& r);

/// Writes report.json, curve_{all,hidden,visible}.csv and proneness.csv.
/// Curve CSV columns: rank,confidence,precision,recall. Proneness CSV
/// columns: rank,recall,visible_share.
void write_report(const std::filesystem::path& dir, const EvalReport& r);

/// Inverse of write_report.
EvalReport read_report(const std::filesystem::path& dir);

struct CurveSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

/// Self-contained SVG line plot on the unit square.
std::string render_svg(const std::vector<CurveSeries>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label);

CurveSeries pr_series(const std::string& label, const std::vector<PRPoint>& curve);
CurveSeries proneness_series(const std::string& label, const std::vector<PronenessPoint>& curve);

/// Writes pr_{all,hidden,visible}.svg and proneness.svg for one report.
void write_plots(const std::filesystem::path& dir, const EvalReport& r, const std::string& label);

/// Side-by-side AP table, one column per report.
std::string compare_table(const std::vector<std::string>& labels,
                          const std::vector<EvalReport>& reports);

/// Overlaid pr_{all,hidden,visible}.svg and proneness.svg across reports.
void write_compare_plots(const std::filesystem::path& dir, const std::vector<std::string>& labels,
                         const std::vector<EvalReport>& reports);

}  // namespace tdet
