#include "rcombat/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace rcombat {

namespace {

const char* kPalette[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
                          "#b279a2", "#ff9da6", "#9d755d", "#bab0ac", "#d6a53c"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

}  // namespace

std::string render_bar_chart_svg(const BarChart& chart) {
    const double width = 760, height = 420;
    const double left = 70, right = 160, top = 50, bottom = 60;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double max_v = 0.0;
    for (const auto& [name, values] : chart.series)
        for (double v : values)
            if (std::isfinite(v)) max_v = std::max(max_v, v);
    if (max_v <= 0.0) max_v = 1.0;
    max_v *= 1.1;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-size=\"16\">" << chart.title << "</text>\n";

    // y axis with 5 ticks
    for (int t = 0; t <= 5; ++t) {
        double v = max_v * t / 5.0;
        double y = top + plot_h - plot_h * t / 5.0;
        svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w
            << "\" y2=\"" << y << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << left - 6 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(v) << "</text>\n";
    }
    svg << "<text x=\"16\" y=\"" << top + plot_h / 2
        << "\" font-size=\"12\" transform=\"rotate(-90 16 " << top + plot_h / 2
        << ")\" text-anchor=\"middle\">" << chart.y_label << "</text>\n";

    const std::size_t n_groups = chart.group_labels.size();
    const std::size_t n_series = chart.series.size();
    const double group_w = plot_w / std::max<std::size_t>(1, n_groups);
    const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, n_series);

    for (std::size_t g = 0; g < n_groups; ++g) {
        double gx = left + group_w * static_cast<double>(g) + group_w * 0.1;
        for (std::size_t s = 0; s < n_series; ++s) {
            const auto& values = chart.series[s].second;
            if (g >= values.size() || !std::isfinite(values[g])) continue;
            double h = plot_h * values[g] / max_v;
            svg << "<rect x=\"" << gx + bar_w * static_cast<double>(s) << "\" y=\""
                << top + plot_h - h << "\" width=\"" << bar_w * 0.92 << "\" height=\""
                << h << "\" fill=\"" << kPalette[s % 10] << "\"/>\n";
        }
        svg << "<text x=\"" << left + group_w * (static_cast<double>(g) + 0.5)
            << "\" y=\"" << top + plot_h + 18
            << "\" text-anchor=\"middle\" font-size=\"12\">" << chart.group_labels[g]
            << "</text>\n";
    }

    for (std::size_t s = 0; s < n_series; ++s) {
        double y = top + 16.0 * static_cast<double>(s);
        svg << "<rect x=\"" << left + plot_w + 14 << "\" y=\"" << y
            << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[s % 10] << "\"/>\n";
        svg << "<text x=\"" << left + plot_w + 30 << "\" y=\"" << y + 10
            << "\" font-size=\"12\">" << chart.series[s].first << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_report_files(const EvaluationReport& report,
                        const std::filesystem::path& out_dir,
                        const std::string& stem) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / (stem + ".json"));
        if (!out) fail(ErrorCode::IoFailure, "cannot write report json");
        out << report.to_json();
    }
    {
        std::ofstream out(out_dir / (stem + ".csv"));
        if (!out) fail(ErrorCode::IoFailure, "cannot write report csv");
        out << report.to_csv();
    }

    // Error-vs-ratio chart (one bar per filter) when site records exist.
    std::set<double> ratios;
    std::set<std::string> filters;
    for (const auto& rec : report.sites) {
        if (rec.failed) continue;
        ratios.insert(rec.disease_ratio);
        filters.insert(rec.filter);
    }
    if (!ratios.empty() && !filters.empty()) {
        BarChart chart;
        chart.title = "Mean STD_MAE by disease ratio";
        chart.y_label = "mean STD_MAE";
        for (double r : ratios) chart.group_labels.push_back(fmt(r));
        for (const auto& f : filters) {
            std::vector<double> values;
            for (double r : ratios) {
                try {
                    values.push_back(report.mean_std_mae(r, f));
                } catch (const Error&) {
                    values.push_back(std::numeric_limits<double>::quiet_NaN());
                }
            }
            chart.series.emplace_back(f, std::move(values));
        }
        std::ofstream out(out_dir / (stem + "_by_ratio.svg"));
        if (!out) fail(ErrorCode::IoFailure, "cannot write report svg");
        out << render_bar_chart_svg(chart);
    }

    if (!report.bootstrap.empty()) {
        BarChart chart;
        chart.title = "Mean Bhattacharyya distance by metric";
        chart.y_label = "Bhattacharyya";
        std::set<std::string> series_names;
        for (const auto& row : report.bootstrap) {
            chart.group_labels.push_back(row.metric);
            for (const auto& [f, v] : row.mean_bhattacharyya) series_names.insert(f);
        }
        for (const auto& f : series_names) {
            std::vector<double> values;
            for (const auto& row : report.bootstrap) {
                auto it = row.mean_bhattacharyya.find(f);
                values.push_back(it == row.mean_bhattacharyya.end()
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : it->second);
            }
            chart.series.emplace_back(f, std::move(values));
        }
        std::ofstream out(out_dir / (stem + "_bhattacharyya.svg"));
        if (!out) fail(ErrorCode::IoFailure, "cannot write report svg");
        out << render_bar_chart_svg(chart);
    }
}

}  // namespace rcombat
