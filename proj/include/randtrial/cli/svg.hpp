// svg.hpp - Type I error convergence chart.
//
// x is log2(n); y is the Type I error. Each series draws a shaded band from
// p2.5 to p97.5 and a line through the means. A grey horizontal band marks the
// Monte Carlo error around the nominal level and a dashed line marks the level.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "randtrial/errors.hpp"
#include "randtrial/harness.hpp"

namespace randtrial::svg {

struct SeriesPoint {
    double n = 0;
    double mean = 0;
    double p2_5 = 0;
    double p97_5 = 0;
};

struct Series {
    std::string label;
    std::vector<SeriesPoint> points;  // sorted by n when drawn
};

/// Data-to-pixel transform:
///   px(n) = left + width  * (log2 n - x_lo) / (x_hi - x_lo)
///   py(v) = top  + height * (y_hi - v)      / (y_hi - y_lo)
struct PlotAxes {
    double x_lo = 0, x_hi = 1;  // log2(n)
    double y_lo = 0, y_hi = 0.1;
    double left = 70, top = 40, width = 560, height = 400;

    double px(double n) const { return left + width * (std::log2(n) - x_lo) / (x_hi - x_lo); }
    double py(double v) const { return top + height * (y_hi - v) / (y_hi - y_lo); }
    double value_at(double pixel_y) const { return y_hi - (pixel_y - top) * (y_hi - y_lo) / height; }
};

inline PlotAxes fit_axes(const std::vector<Series>& series, double reference, double half_width) {
    double n_lo = INFINITY, n_hi = -INFINITY, v_hi = reference + half_width;
    for (const auto& s : series)
        for (const auto& p : s.points) {
            n_lo = std::min(n_lo, p.n);
            n_hi = std::max(n_hi, p.n);
            v_hi = std::max({v_hi, p.p97_5, p.mean});
        }
    PlotAxes a;
    a.x_lo = std::log2(n_lo);
    a.x_hi = std::log2(n_hi);
    if (a.x_hi - a.x_lo < 1e-9) {
        a.x_lo -= 0.5;
        a.x_hi += 0.5;
    }
    a.y_lo = 0.0;
    a.y_hi = std::max(0.1, std::ceil(v_hi * 1.05 / 0.05) * 0.05);
    return a;
}

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
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

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                   "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
    return colors[i % (sizeof colors / sizeof colors[0])];
}

}  // namespace detail

/// Writes the chart. `L` sets the Monte Carlo band, `reference` the nominal level.
inline void write_chart(std::ostream& os, std::vector<Series> series, double L, double reference = 0.05) {
    if (series.empty()) throw InvalidInput("nothing to plot: the summary has no rows");
    for (auto& s : series) std::sort(s.points.begin(), s.points.end(), [](auto& a, auto& b) { return a.n < b.n; });
    const double hw = monte_carlo_half_width(L, reference);
    const PlotAxes ax = fit_axes(series, reference, hw);
    using detail::num;

    const double total_w = ax.left + ax.width + 220;
    const double total_h = ax.top + ax.height + 60;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(total_w) << "\" height=\"" << num(total_h)
       << "\" viewBox=\"0 0 " << num(total_w) << ' ' << num(total_h) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << num(total_w) << "\" height=\"" << num(total_h) << "\" fill=\"white\"/>\n";

    // Monte Carlo band and reference line.
    const double band_top = ax.py(reference + hw);
    const double band_bottom = ax.py(std::max(ax.y_lo, reference - hw));
    os << "<rect class=\"mc-band\" x=\"" << num(ax.left) << "\" y=\"" << num(band_top) << "\" width=\"" << num(ax.width)
       << "\" height=\"" << num(band_bottom - band_top) << "\" fill=\"#cccccc\" fill-opacity=\"0.6\"/>\n";
    os << "<line class=\"reference\" x1=\"" << num(ax.left) << "\" y1=\"" << num(ax.py(reference)) << "\" x2=\""
       << num(ax.left + ax.width) << "\" y2=\"" << num(ax.py(reference))
       << "\" stroke=\"black\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n";

    // Axes and ticks.
    os << "<line class=\"axis\" x1=\"" << num(ax.left) << "\" y1=\"" << num(ax.top + ax.height) << "\" x2=\""
       << num(ax.left + ax.width) << "\" y2=\"" << num(ax.top + ax.height) << "\" stroke=\"black\"/>\n";
    os << "<line class=\"axis\" x1=\"" << num(ax.left) << "\" y1=\"" << num(ax.top) << "\" x2=\"" << num(ax.left)
       << "\" y2=\"" << num(ax.top + ax.height) << "\" stroke=\"black\"/>\n";
    for (int e = static_cast<int>(std::ceil(ax.x_lo - 1e-9)); e <= static_cast<int>(std::floor(ax.x_hi + 1e-9)); ++e) {
        const double x = ax.px(std::ldexp(1.0, e));
        os << "<line class=\"tick\" x1=\"" << num(x) << "\" y1=\"" << num(ax.top + ax.height) << "\" x2=\"" << num(x)
           << "\" y2=\"" << num(ax.top + ax.height + 5) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << num(x) << "\" y=\"" << num(ax.top + ax.height + 18) << "\" text-anchor=\"middle\">"
           << static_cast<long long>(std::ldexp(1.0, e)) << "</text>\n";
    }
    const double y_step = ax.y_hi <= 0.1 ? 0.01 : 0.05;
    for (double v = ax.y_lo; v <= ax.y_hi + 1e-9; v += y_step) {
        const double y = ax.py(v);
        os << "<line class=\"tick\" x1=\"" << num(ax.left - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(ax.left)
           << "\" y2=\"" << num(y) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << num(ax.left - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
           << num(v).substr(0, 4) << "</text>\n";
    }
    os << "<text x=\"" << num(ax.left + ax.width / 2) << "\" y=\"" << num(ax.top + ax.height + 40)
       << "\" text-anchor=\"middle\">Sample size n (log2 scale)</text>\n";
    os << "<text x=\"16\" y=\"" << num(ax.top + ax.height / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << num(ax.top + ax.height / 2) << ")\">Type I error</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = detail::palette(i);
        os << "<g class=\"series\" data-label=\"" << detail::escape(s.label) << "\">\n";
        os << "<polygon class=\"pi-band\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (const auto& p : s.points) os << num(ax.px(p.n)) << ',' << num(ax.py(p.p97_5)) << ' ';
        for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
            os << num(ax.px(it->n)) << ',' << num(ax.py(it->p2_5)) << ' ';
        os << "\"/>\n";
        os << "<polyline class=\"mean-line\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : s.points) os << num(ax.px(p.n)) << ',' << num(ax.py(p.mean)) << ' ';
        os << "\"/>\n";
        const double ly = ax.top + 14 + 18 * static_cast<double>(i);
        const double lx = ax.left + ax.width + 16;
        os << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(lx + 20) << "\" y2=\""
           << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly) << "\">" << detail::escape(s.label) << "</text>\n";
        os << "</g>\n";
    }
    os << "</svg>\n";
}

}  // namespace randtrial::svg
