/**
 * @file plot.hpp
 * @brief Self-contained SVG line charts with a logarithmic y-axis.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "dansf/core.hpp"
#include "dansf/metrics.hpp"

namespace dansf {

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

inline PlotSeries series_from_summary(std::string name, const McSummary& s) {
    PlotSeries p{std::move(name), {}, s.median};
    for (std::size_t i = 0; i < s.median.size(); ++i) p.x.push_back(static_cast<double>(i));
    return p;
}

/// Reads the median column of a summary CSV (iter,median,q1,q3).
inline PlotSeries read_summary_csv(std::istream& in, std::string name) {
    PlotSeries p{std::move(name), {}, {}};
    std::string line;
    int line_no = 0;
    auto bad = [&](const std::string& why) { fail(Errc::parse_error, "line " + std::to_string(line_no) + ": " + why); };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "iter,median,q1,q3") bad("expected header 'iter,median,q1,q3'");
            continue;
        }
        if (line.empty()) continue;
        std::vector<double> fields;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            try {
                std::size_t used = 0;
                fields.push_back(std::stod(cell, &used));
                if (used != cell.size()) bad("trailing characters in '" + cell + "'");
            } catch (const std::logic_error&) {
                bad("not a number: '" + cell + "'");
            }
        }
        if (fields.size() != 4) bad("expected 4 fields, got " + std::to_string(fields.size()));
        p.x.push_back(fields[0]);
        p.y.push_back(fields[1]);
    }
    if (line_no == 0) fail(Errc::parse_error, "line 1: empty file");
    return p;
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/**
 * @brief Renders one polyline per series. Non-positive and non-finite values
 *        are left out of the lines; y ticks sit at every decade in range.
 */
inline std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title) {
    constexpr double width = 720, height = 480, left = 80, right = 170, top = 40, bottom = 50;
    constexpr double plot_w = width - left - right, plot_h = height - top - bottom;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    double x_min = 0, x_max = 1, y_lo = 0, y_hi = 0;
    bool any = false;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i])) continue;
            const double ly = std::log10(s.y[i]);
            if (!any) {
                x_min = x_max = s.x[i];
                y_lo = y_hi = ly;
                any = true;
            }
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            y_lo = std::min(y_lo, ly);
            y_hi = std::max(y_hi, ly);
        }
    }
    if (x_max <= x_min) x_max = x_min + 1;
    int d_lo = static_cast<int>(std::floor(y_lo)), d_hi = static_cast<int>(std::ceil(y_hi));
    if (d_hi <= d_lo) d_hi = d_lo + 1;
    auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * plot_w; };
    auto py = [&](double ly) { return top + (d_hi - ly) / (d_hi - d_lo) * plot_h; };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n",
        width, height, width, height);
    svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", width, height);
    svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       left + plot_w / 2, detail::xml_escape(title));
    svg += fmt::format("<g class=\"axes\" stroke=\"black\"><line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>"
                       "<line x1=\"{0}\" y1=\"{2}\" x2=\"{3}\" y2=\"{2}\"/></g>\n",
                       left, top, top + plot_h, left + plot_w);
    const int step = std::max(1, (d_hi - d_lo + 11) / 12);
    for (int d = d_lo; d <= d_hi; d += step) {
        const double y = py(d);
        svg += fmt::format("<line class=\"ytick\" x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>"
                           "<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">1e{}</text>\n",
                           left, y, left + plot_w, y, left - 6, y + 4, d);
    }
    for (int t = 0; t <= 5; ++t) {
        const double xv = x_min + (x_max - x_min) * t / 5.0;
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{:g}</text>\n", px(xv),
                           top + plot_h + 18, std::round(xv * 100) / 100);
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">iteration</text>\n", left + plot_w / 2,
                       height - 8);
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % std::size(palette)];
        std::string points;
        for (std::size_t i = 0; i < series[s].y.size(); ++i) {
            const double v = series[s].y[i];
            if (!(v > 0.0) || !std::isfinite(v)) continue;
            if (!points.empty()) points += ' ';
            points += fmt::format("{:.2f},{:.2f}", px(series[s].x[i]), py(std::log10(v)));
        }
        if (!points.empty()) {
            svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color,
                               points);
        }
        const double ly = top + 16 + 18 * static_cast<double>(s);
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>"
                           "<text x=\"{4}\" y=\"{5}\">{6}</text>\n",
                           left + plot_w + 12, ly, left + plot_w + 32, color, left + plot_w + 38, ly + 4,
                           detail::xml_escape(series[s].name));
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace dansf
