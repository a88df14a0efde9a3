#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rcombat/eval.hpp"

namespace rcombat {

/// Grouped bar chart: one group per x label, one bar per series.
struct BarChart {
    std::string title;
    std::string y_label;
    std::vector<std::string> group_labels;               // e.g. ratios
    std::vector<std::pair<std::string, std::vector<double>>> series;  // filter -> values
};

std::string render_bar_chart_svg(const BarChart& chart);

/// Emit the report bundle: error-vs-ratio SVG per filter set, aggregate
/// CSV tables, and the machine-readable JSON.
void write_report_files(const EvaluationReport& report,
                        const std::filesystem::path& out_dir,
                        const std::string& stem);

}  // namespace rcombat
