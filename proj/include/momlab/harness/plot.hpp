#pragma once

// SVG figures rendered from persisted summary CSVs. Output depends only on
// the CSV contents: fixed-precision coordinates, no timestamps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "momlab/csv.hpp"
#include "momlab/errors.hpp"

namespace momlab {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
    std::string color = "#1f77b4";
    bool dashed = false;
    bool markers = true;
    bool line = true;
};

struct Figure {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool logx = false;
    bool logy = false;
    std::vector<PlotSeries> series;
};

namespace detail {

inline std::string px(double v) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.2f", v);
    return b;
}

inline std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

}  // namespace detail

inline std::string render_svg(const Figure& fig) {
    const double W = 640, H = 440, left = 70, right = 160, top = 40, bottom = 55;
    const double pw = W - left - right, ph = H - top - bottom;
    auto tx = [&](double v, bool lg) { return lg ? std::log10(v) : v; };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const PlotSeries& s : fig.series)
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if ((fig.logx && x <= 0) || (fig.logy && y <= 0)) continue;
            x0 = std::min(x0, tx(x, fig.logx));
            x1 = std::max(x1, tx(x, fig.logx));
            y0 = std::min(y0, tx(y, fig.logy));
            y1 = std::max(y1, tx(y, fig.logy));
        }
    if (!std::isfinite(x0)) {
        x0 = 0;
        x1 = 1;
        y0 = 0;
        y1 = 1;
    }
    if (x1 - x0 < 1e-12) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if (y1 - y0 < 1e-12) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
    x0 -= padx;
    x1 += padx;
    y0 -= pady;
    y1 += pady;
    auto sx = [&](double v) { return left + (tx(v, fig.logx) - x0) / (x1 - x0) * pw; };
    auto sy = [&](double v) { return top + ph - (tx(v, fig.logy) - y0) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << detail::px(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << detail::xml_escape(fig.title) << "</text>\n";
    o << "<rect x=\"" << detail::px(left) << "\" y=\"" << detail::px(top) << "\" width=\"" << detail::px(pw)
      << "\" height=\"" << detail::px(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

    // Ticks: 5 evenly spaced in transformed coordinates.
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
        const double X = left + pw * i / 4.0, Y = top + ph - ph * i / 4.0;
        char lx[32], ly[32];
        std::snprintf(lx, sizeof(lx), "%.3g", fig.logx ? std::pow(10.0, fx) : fx);
        std::snprintf(ly, sizeof(ly), "%.3g", fig.logy ? std::pow(10.0, fy) : fy);
        o << "<line x1=\"" << detail::px(X) << "\" y1=\"" << detail::px(top + ph) << "\" x2=\"" << detail::px(X)
          << "\" y2=\"" << detail::px(top + ph + 5) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << detail::px(X) << "\" y=\"" << detail::px(top + ph + 18) << "\" text-anchor=\"middle\">"
          << lx << "</text>\n";
        o << "<line x1=\"" << detail::px(left - 5) << "\" y1=\"" << detail::px(Y) << "\" x2=\"" << detail::px(left)
          << "\" y2=\"" << detail::px(Y) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << detail::px(left - 8) << "\" y=\"" << detail::px(Y + 4) << "\" text-anchor=\"end\">" << ly
          << "</text>\n";
    }
    o << "<text x=\"" << detail::px(left + pw / 2) << "\" y=\"" << detail::px(H - 12) << "\" text-anchor=\"middle\">"
      << detail::xml_escape(fig.xlabel) << (fig.logx ? " (log)" : "") << "</text>\n";
    o << "<text x=\"16\" y=\"" << detail::px(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << detail::px(top + ph / 2) << ")\">" << detail::xml_escape(fig.ylabel) << (fig.logy ? " (log)" : "")
      << "</text>\n";

    std::size_t legend = 0;
    for (const PlotSeries& s : fig.series) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : s.points)
            if (std::isfinite(p.first) && std::isfinite(p.second) && (!fig.logx || p.first > 0) &&
                (!fig.logy || p.second > 0))
                pts.push_back(p);
        if (s.line && pts.size() > 1) {
            o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
              << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
            for (std::size_t i = 0; i < pts.size(); ++i)
                o << (i ? " " : "") << detail::px(sx(pts[i].first)) << ',' << detail::px(sy(pts[i].second));
            o << "\"/>\n";
        }
        if (s.markers)
            for (const auto& [x, y] : pts)
                o << "<circle cx=\"" << detail::px(sx(x)) << "\" cy=\"" << detail::px(sy(y)) << "\" r=\"3\" fill=\""
                  << s.color << "\"/>\n";
        const double ly = top + 10 + 16.0 * static_cast<double>(legend++);
        o << "<line x1=\"" << detail::px(left + pw + 12) << "\" y1=\"" << detail::px(ly) << "\" x2=\""
          << detail::px(left + pw + 32) << "\" y2=\"" << detail::px(ly) << "\" stroke=\"" << s.color
          << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"4 3\"" : "") << "/>\n";
        o << "<text x=\"" << detail::px(left + pw + 36) << "\" y=\"" << detail::px(ly + 4) << "\">"
          << detail::xml_escape(s.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

enum class PlotKind { alpha, sensing, beta_star };

inline PlotKind plot_kind_from_string(const std::string& s) {
    if (s == "alpha") return PlotKind::alpha;
    if (s == "sensing") return PlotKind::sensing;
    if (s == "beta-star") return PlotKind::beta_star;
    throw ConfigError("unknown plot kind '" + s + "' (alpha, sensing, beta-star)");
}

/// The summary CSV each plot kind consumes.
inline const char* plot_source(PlotKind k) {
    switch (k) {
        case PlotKind::alpha: return "uv_alpha.csv";
        case PlotKind::sensing: return "ms_curves.csv";
        case PlotKind::beta_star: return "bs_summary.csv";
    }
    return "";
}

namespace detail {

/// Reads a CSV; a zero-byte file counts as an empty table.
inline csv::Table read_optional_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    if (in.peek() == std::ifstream::traits_type::eof()) return {};
    return csv::parse(in);
}

inline bool require_columns(const csv::Table& t, const std::vector<std::string>& cols) {
    if (t.header.empty() && t.rows.empty()) return false;  // empty file: axes only
    for (const std::string& c : cols) t.require_column(c);
    return true;
}

}  // namespace detail

inline Figure alpha_figure(const csv::Table& t) {
    Figure f{"Timescale exponent alpha(gamma)", "gamma", "alpha", true, true, {}};
    PlotSeries theory{"max(2(1-g), g)", {}, "#7f7f7f", true, false, true};
    for (int i = 0; i <= 100; ++i) {
        const double g = 0.2 + 0.7 * i / 100.0;
        theory.points.emplace_back(g, std::max(2.0 * (1.0 - g), g));
    }
    f.series.push_back(theory);
    if (!detail::require_columns(t, {"gamma", "alpha"})) return f;
    PlotSeries meas{"measured", {}, detail::palette(0), false, true, false};
    const int cg = t.require_column("gamma"), ca = t.require_column("alpha");
    for (std::size_t i = 0; i < t.rows.size(); ++i) meas.points.emplace_back(t.number(i, cg), t.number(i, ca));
    std::sort(meas.points.begin(), meas.points.end());
    f.series.push_back(meas);
    return f;
}

inline Figure sensing_figure(const csv::Table& t) {
    Figure f{"Matrix sensing test error", "step", "test error", false, true, {}};
    if (!detail::require_columns(t, {"beta", "step", "test_error"})) return f;
    const int cb = t.require_column("beta"), cs = t.require_column("step"), ce = t.require_column("test_error");
    // Mean over seeds at each (beta, step).
    std::map<double, std::map<double, std::pair<double, int>>> acc;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        auto& cell = acc[t.number(i, cb)][t.number(i, cs)];
        cell.first += t.number(i, ce);
        cell.second += 1;
    }
    std::size_t k = 0;
    for (const auto& [beta, steps] : acc) {
        char name[32];
        std::snprintf(name, sizeof(name), "beta=%.3g", beta);
        PlotSeries s{name, {}, detail::palette(k++), false, false, true};
        for (const auto& [step, v] : steps) s.points.emplace_back(step, v.first / v.second);
        f.series.push_back(s);
    }
    return f;
}

inline Figure beta_star_figure(const csv::Table& t) {
    Figure f{"Optimal momentum 1 - beta* vs eta", "eta", "1 - beta*", true, true, {}};
    if (!detail::require_columns(t, {"eta", "one_minus_beta_star", "exponent", "prefactor"})) return f;
    const int ce = t.require_column("eta"), cb = t.require_column("one_minus_beta_star");
    const int cx = t.require_column("exponent"), cp = t.require_column("prefactor");
    PlotSeries meas{"measured", {}, detail::palette(0), false, true, false};
    for (std::size_t i = 0; i < t.rows.size(); ++i) meas.points.emplace_back(t.number(i, ce), t.number(i, cb));
    std::sort(meas.points.begin(), meas.points.end());
    f.series.push_back(meas);
    if (!t.rows.empty()) {
        const double ex = t.number(0, cx), pre = t.number(0, cp);
        if (std::isfinite(ex) && std::isfinite(pre) && !meas.points.empty()) {
            char name[48];
            std::snprintf(name, sizeof(name), "fit eta^%.3f", ex);
            PlotSeries fit{name, {}, detail::palette(3), true, false, true};
            const double a = meas.points.front().first, b = meas.points.back().first;
            for (int i = 0; i <= 20; ++i) {
                const double e = a * std::pow(b / a, i / 20.0);
                fit.points.emplace_back(e, pre * std::pow(e, ex));
            }
            f.series.push_back(fit);
        }
    }
    return f;
}

/// Renders the figure for `kind` from the CSV at `csv_path` into `svg_path`.
inline void emit_plot(const std::string& csv_path, PlotKind kind, const std::string& svg_path) {
    const csv::Table t = detail::read_optional_table(csv_path);
    Figure f;
    switch (kind) {
        case PlotKind::alpha: f = alpha_figure(t); break;
        case PlotKind::sensing: f = sensing_figure(t); break;
        case PlotKind::beta_star: f = beta_star_figure(t); break;
    }
    std::ofstream out(svg_path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + svg_path + "'");
    out << render_svg(f);
}

}  // namespace momlab
