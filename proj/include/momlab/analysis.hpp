#pragma once

// Fits that turn trajectories into timescales, exponents and constants.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "momlab/csv.hpp"
#include "momlab/numerics.hpp"

namespace momlab {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double ssr = 0.0;
};

/// Ordinary least squares y = a + b x on centered data.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractViolation("fit_line: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw InsufficientData("need at least 2 points for a line");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw DomainError("fit_line: all abscissae coincide");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        f.ssr += r * r;
    }
    f.r_squared = syy > 0 ? std::clamp(1.0 - f.ssr / syy, 0.0, 1.0) : 1.0;
    return f;
}

struct ExpFit {
    double T_c = 0.0;
    double amplitude = 0.0;
    double r_squared = 0.0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t points = 0;
};

/// Fits value ~ a exp(-t / T_c) by a line through (t, log value), skipping
/// the leading `skip_fraction` of the points (the fast transient).
inline ExpFit fit_exponential(const std::vector<double>& t, const std::vector<double>& value,
                              double skip_fraction = 0.2, std::size_t min_points = 10) {
    if (t.size() != value.size()) throw ContractViolation("fit_exponential: size mismatch");
    if (!(skip_fraction >= 0.0 && skip_fraction < 1.0)) throw ContractViolation("skip_fraction must lie in [0, 1)");
    const auto first = static_cast<std::size_t>(std::floor(skip_fraction * static_cast<double>(t.size())));
    if (t.size() - first < min_points)
        throw InsufficientData("fit_exponential needs " + std::to_string(min_points) + " points in the window, got " +
                               std::to_string(t.size() - first));
    std::vector<double> x, y;
    for (std::size_t i = first; i < t.size(); ++i) {
        if (!(value[i] > 0) || !std::isfinite(value[i]))
            throw DomainError("fit_exponential needs positive values (index " + std::to_string(i) + ")");
        x.push_back(t[i]);
        y.push_back(std::log(value[i]));
    }
    const LineFit lf = fit_line(x, y);
    const double span = x.back() - x.front();
    const double ymag = std::max(1.0, std::abs(lf.intercept));
    if (!(lf.slope < 0) || std::abs(lf.slope) * span <= 1e-12 * ymag)
        throw UnboundedTimescale("log-linear slope " + csv::fmt(lf.slope) + " is not negative");
    ExpFit f;
    f.T_c = -1.0 / lf.slope;
    f.amplitude = std::exp(lf.intercept);
    f.r_squared = lf.r_squared;
    f.t_start = x.front();
    f.t_end = x.back();
    f.points = x.size();
    return f;
}

struct PowerLawFit {
    double T0 = 0.0;
    double alpha = 0.0;
    double residual = 0.0;  // RMS in log space
    double r_squared = 0.0;
};

/// T(eta) = T0 eta^-alpha by least squares in log-log space.
inline PowerLawFit fit_powerlaw(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw InsufficientData("fit_powerlaw needs at least 3 points");
    std::vector<double> x, y;
    for (const auto& [eta, tc] : points) {
        if (!(eta > 0) || !(tc > 0)) throw DomainError("fit_powerlaw needs positive values");
        x.push_back(std::log(eta));
        y.push_back(std::log(tc));
    }
    const LineFit lf = fit_line(x, y);
    PowerLawFit f;
    f.alpha = -lf.slope;
    f.T0 = std::exp(lf.intercept);
    f.residual = std::sqrt(lf.ssr / static_cast<double>(points.size()));
    f.r_squared = lf.r_squared;
    return f;
}

/// (eta, T_c) measurements for one gamma.
struct GammaSweep {
    double gamma = 0.0;
    std::vector<std::pair<double, double>> points;
};

/// Spread of log T0 across gamma: max - min of the fitted log prefactors.
inline double log_t0_spread(const std::vector<GammaSweep>& sweeps) {
    if (sweeps.size() < 2) throw InsufficientData("joint fit needs at least 2 gamma values");
    double lo = INFINITY, hi = -INFINITY;
    for (const GammaSweep& s : sweeps) {
        if (s.points.size() < 3)
            throw InsufficientData("gamma " + csv::fmt(s.gamma) + " has fewer than 3 eta points");
        const double l = std::log(fit_powerlaw(s.points).T0);
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    return hi - lo;
}

struct JointFitResult {
    double C = 0.0;
    double spread = 0.0;
    std::vector<std::pair<double, double>> profile;  // (C, spread) for every evaluation, sorted by C
    bool ambiguous = false;
    std::string warning;
};

/// Chooses C so that the fitted power-law prefactors agree across gamma.
/// `sweeps_at(C)` produces the per-gamma (eta, T_c) data for one candidate C.
/// Grid scan, then golden-section refinement inside the bracketing cells.
inline JointFitResult joint_fit_C(const std::function<std::vector<GammaSweep>(double)>& sweeps_at,
                                  std::vector<double> c_grid, int refine_iterations = 12) {
    if (c_grid.size() < 3) throw InsufficientData("joint_fit_C needs at least 3 grid values of C");
    std::sort(c_grid.begin(), c_grid.end());
    JointFitResult out;
    std::vector<double> grid_spread;
    for (double c : c_grid) {
        if (!(c > 0)) throw InvalidHyperparameter("C grid values must be positive");
        grid_spread.push_back(log_t0_spread(sweeps_at(c)));
        out.profile.emplace_back(c, grid_spread.back());
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < c_grid.size(); ++i)
        if (grid_spread[i] < grid_spread[best]) best = i;
    int local_minima = 0;
    for (std::size_t i = 0; i < c_grid.size(); ++i) {
        const bool left = i == 0 || grid_spread[i] < grid_spread[i - 1];
        const bool right = i + 1 == c_grid.size() || grid_spread[i] < grid_spread[i + 1];
        if (left && right) ++local_minima;
    }
    if (local_minima > 1) {
        out.ambiguous = true;
        out.warning = "spread profile over the C grid has " + std::to_string(local_minima) + " local minima";
    }
    double a = c_grid[best == 0 ? 0 : best - 1];
    double b = c_grid[best + 1 == c_grid.size() ? best : best + 1];
    double best_c = c_grid[best], best_s = grid_spread[best];
    if (best == 0 || best + 1 == c_grid.size()) {
        if (!out.warning.empty()) out.warning += "; ";
        out.warning += "minimum at the edge of the C grid";
    }
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
    double f1 = log_t0_spread(sweeps_at(x1)), f2 = log_t0_spread(sweeps_at(x2));
    out.profile.emplace_back(x1, f1);
    out.profile.emplace_back(x2, f2);
    for (int it = 0; it < refine_iterations; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = log_t0_spread(sweeps_at(x1));
            out.profile.emplace_back(x1, f1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = log_t0_spread(sweeps_at(x2));
            out.profile.emplace_back(x2, f2);
        }
    }
    for (const auto& [c, s] : out.profile)
        if (s < best_s) {
            best_s = s;
            best_c = c;
        }
    std::sort(out.profile.begin(), out.profile.end());
    out.C = best_c;
    out.spread = best_s;
    return out;
}

struct PiecewiseFit {
    double a_max = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double beta_star = 0.0;
    double residual = 0.0;  // sum of squared residuals
    bool at_boundary = false;

    double operator()(double beta) const {
        const double d = beta - beta_star;
        return a_max + (d <= 0 ? a1 * d : a2 * d);
    }
};

/// A(beta) = a_max + a1 (beta - b*) for beta <= b*, a2 (beta - b*) above.
/// b* is scanned over the sampled betas and the midpoints between them; for
/// each candidate the remaining parameters come from linear least squares.
inline PiecewiseFit fit_piecewise(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 4) throw InsufficientData("fit_piecewise needs at least 4 points");
    std::vector<std::pair<double, double>> pts = points;
    std::sort(pts.begin(), pts.end());
    std::vector<double> cand;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        cand.push_back(pts[i].first);
        if (i + 1 < pts.size() && pts[i + 1].first > pts[i].first)
            cand.push_back(0.5 * (pts[i].first + pts[i + 1].first));
    }
    const Index n = static_cast<Index>(pts.size());
    RealVector y(n);
    for (Index i = 0; i < n; ++i) y(i) = pts[static_cast<std::size_t>(i)].second;

    PiecewiseFit best;
    best.residual = INFINITY;
    for (double bs : cand) {
        Matrix x(n, 3);
        for (Index i = 0; i < n; ++i) {
            const double d = pts[static_cast<std::size_t>(i)].first - bs;
            x(i, 0) = 1.0;
            x(i, 1) = std::min(d, 0.0);
            x(i, 2) = std::max(d, 0.0);
        }
        // Boundary candidates leave one column identically zero; the
        // complete orthogonal decomposition returns the minimum-norm solution.
        const RealVector coef = x.completeOrthogonalDecomposition().solve(y);
        const double ssr = (x * coef - y).squaredNorm();
        if (ssr < best.residual - 1e-15 * std::max(1.0, y.squaredNorm())) {
            best.residual = ssr;
            best.a_max = coef(0);
            best.a1 = coef(1);
            best.a2 = coef(2);
            best.beta_star = bs;
        }
    }
    best.at_boundary = best.beta_star <= pts.front().first || best.beta_star >= pts.back().first;
    return best;
}

}  // namespace momlab
