#pragma once

// Linearization of noiseless heavy-ball GD around a minimum in the extended
// phase space x = (pi, w):
//   J = [[beta I, -H], [eta beta I, I - eta H]].
// Each Hessian eigenpair (lambda, q) yields two eigenvectors (mu q, q) with
// kappa^2 - (1 + beta - eta lambda) kappa + beta = 0.

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <vector>

#include "momlab/csv.hpp"
#include "momlab/numerics.hpp"

namespace momlab {

using Complex = std::complex<double>;

inline Matrix extended_jacobian(const SymMatrix& h, double eta, double beta) {
    const Index n = h.size();
    const Matrix id = Matrix::Identity(n, n);
    Matrix j(2 * n, 2 * n);
    j.topLeftCorner(n, n) = beta * id;
    j.topRightCorner(n, n) = -h.matrix();
    j.bottomLeftCorner(n, n) = eta * beta * id;
    j.bottomRightCorner(n, n) = id - eta * h.matrix();
    return j;
}

enum class ModeCase {
    real_decay,        // eta lambda < (1 - sqrt beta)^2
    complex_spiral,    // (1 - sqrt beta)^2 < eta lambda < (1 + sqrt beta)^2, |kappa| = sqrt beta
    real_oscillating,  // (1 + sqrt beta)^2 < eta lambda < 2 (1 + beta): real, negative kappa_-
    marginal,          // within 1e-12 of a discriminant root
    unstable,          // eta lambda >= 2 (1 + beta)
};

inline const char* to_string(ModeCase c) {
    switch (c) {
        case ModeCase::real_decay: return "real-decay";
        case ModeCase::complex_spiral: return "complex-spiral";
        case ModeCase::real_oscillating: return "real-oscillating";
        case ModeCase::marginal: return "marginal";
        case ModeCase::unstable: return "unstable";
    }
    return "?";
}

inline void check_eta_beta(double eta, double beta) {
    if (!(eta > 0) || !std::isfinite(eta)) throw InvalidHyperparameter("eta must be positive");
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidHyperparameter("beta must lie in [0, 1)");
}

inline ModeCase classify_mode(double lambda, double eta, double beta) {
    check_eta_beta(eta, beta);
    if (lambda < 0) throw DomainError("classify_mode requires lambda >= 0");
    const double x = eta * lambda;
    const double sb = std::sqrt(beta);
    const double lo = (1.0 - sb) * (1.0 - sb);
    const double hi = (1.0 + sb) * (1.0 + sb);
    if (x >= 2.0 * (1.0 + beta)) return ModeCase::unstable;
    if (std::abs(x - lo) < 1e-12 || std::abs(x - hi) < 1e-12) return ModeCase::marginal;
    if (x < lo) return ModeCase::real_decay;
    if (x < hi) return ModeCase::complex_spiral;
    return ModeCase::real_oscillating;
}

struct SpectralMode {
    double lambda = 0.0;
    Complex kappa_plus;
    Complex kappa_minus;
    Complex mu_plus;
    Complex mu_minus;
    ModeCase case_tag = ModeCase::real_decay;
    bool mu_defined = true;  // false at beta = 0, where the w-block decouples
};

/// kappa_+- = (A +- sqrt(A^2 - 4 beta)) / 2 with A = 1 + beta - eta lambda, and
/// mu_+- = (beta - 1 + eta lambda +- sqrt(A^2 - 4 beta)) / (2 beta eta).
inline SpectralMode mode_eigs(double lambda, double eta, double beta) {
    check_eta_beta(eta, beta);
    SpectralMode m;
    m.lambda = lambda;
    m.case_tag = classify_mode(std::max(lambda, 0.0), eta, beta);
    const double a = 1.0 + beta - eta * lambda;
    const double disc = a * a - 4.0 * beta;
    if (disc >= 0.0) {
        // Avoid cancellation: take the large root directly, the small one from the product.
        const double big = 0.5 * (a + std::copysign(std::sqrt(disc), a));
        const double small = big != 0.0 ? beta / big : 0.0;
        if (a >= 0) {
            m.kappa_plus = big;
            m.kappa_minus = small;
        } else {
            m.kappa_plus = small;
            m.kappa_minus = big;
        }
    } else {
        const double im = 0.5 * std::sqrt(-disc);
        m.kappa_plus = Complex(0.5 * a, im);
        m.kappa_minus = Complex(0.5 * a, -im);
    }
    if (beta == 0.0) {
        m.mu_defined = false;
        m.mu_plus = m.mu_minus = Complex(std::nan(""), 0.0);
        return m;
    }
    // Second block row of J (mu q, q) = kappa (mu q, q) gives mu = (kappa - 1 + eta lambda) / (eta beta).
    m.mu_plus = (m.kappa_plus - 1.0 + eta * lambda) / (eta * beta);
    m.mu_minus = (m.kappa_minus - 1.0 + eta * lambda) / (eta * beta);
    return m;
}

inline constexpr double kNegativeCurvatureTol = 1e-6;

struct RhoBounds {
    double rho1 = 0.0;
    double rho2 = 0.0;
    double c1 = 0.0;  // smallest positive Hessian eigenvalue (0 if none)
    double c2 = 0.0;  // largest
    // Small-eta predictions; NaN unless gamma and C were supplied.
    double rho1_asymptotic = std::nan("");
    double rho2_asymptotic = std::nan("");
};

/// Exact extremes of |kappa| < 1 over all modes. Eigenvalues at or below
/// rank_tol * max count as zero modes (kappa_+ = 1 excluded, kappa_- = beta).
inline RhoBounds rho_bounds(const RealVector& spectrum, double eta, double beta, double rank_tol = kDefaultRankTol,
                            double gamma = std::nan(""), double C = std::nan("")) {
    check_eta_beta(eta, beta);
    RhoBounds out;
    const double lmax = spectrum.size() ? spectrum.maxCoeff() : 0.0;
    std::vector<double> offending;
    for (Index i = 0; i < spectrum.size(); ++i)
        if (eta * spectrum(i) >= 2.0 * (1.0 + beta)) offending.push_back(spectrum(i));
    if (!offending.empty()) throw InstabilityError("eta lambda >= 2 (1 + beta) for some modes", offending);

    double r1 = -1.0, r2 = 2.0;
    auto take = [&](double r) {
        if (r < 1.0) {
            r1 = std::max(r1, r);
            r2 = std::min(r2, r);
        }
    };
    out.c1 = 0.0;
    out.c2 = 0.0;
    bool any_positive = false;
    for (Index i = 0; i < spectrum.size(); ++i) {
        const double l = spectrum(i);
        // Points projected to a loss tolerance carry O(residual) negative curvature.
        if (l < -kNegativeCurvatureTol * std::abs(lmax)) throw DomainError("rho_bounds requires a PSD spectrum");
        if (l <= rank_tol * lmax) {
            take(beta);
            continue;
        }
        out.c1 = any_positive ? std::min(out.c1, l) : l;
        out.c2 = std::max(out.c2, l);
        any_positive = true;
        const SpectralMode m = mode_eigs(l, eta, beta);
        take(std::abs(m.kappa_plus));
        take(std::abs(m.kappa_minus));
    }
    if (r1 < 0) throw DomainError("no stable modes in spectrum");
    out.rho1 = r1;
    out.rho2 = r2;
    if (std::isfinite(gamma) && std::isfinite(C)) {
        if (gamma < 0.5) {
            out.rho1_asymptotic = 1.0 - (out.c1 / C) * std::pow(eta, 1.0 - gamma);
            out.rho2_asymptotic = 1.0 - C * std::pow(eta, gamma);
        } else {
            out.rho1_asymptotic = std::sqrt(beta);
            out.rho2_asymptotic = beta;
        }
    }
    return out;
}

/// Rate exponents of the equilibration timescale table: tau1^-1 ~ eta^exponent.
struct Tau1Table {
    double gamma = 0.0;
    std::vector<double> longitudinal;
    std::vector<double> transverse;
    double slowest_exponent = 0.0;  // the overall equilibration rate exponent
    double drift_exponent = 0.0;    // 2 (1 - gamma), for tau2^-1
    double slowest_rate = 0.0;      // prefactor-included rate at the given eta
    bool collides() const { return std::abs(slowest_exponent - drift_exponent) < 1e-12; }
};

inline Tau1Table tau1_prediction(double gamma, double eta, double C, double c1) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidHyperparameter("gamma must lie in [0, 1]");
    Tau1Table t;
    t.gamma = gamma;
    t.longitudinal = {gamma};
    t.drift_exponent = 2.0 * (1.0 - gamma);
    if (gamma < 0.5) {
        t.transverse = {1.0 - gamma, gamma};
        t.slowest_exponent = 1.0 - gamma;
        t.slowest_rate = (c1 / C) * std::pow(eta, 1.0 - gamma);
    } else {
        t.transverse = {gamma, gamma};
        t.slowest_exponent = gamma;
        t.slowest_rate = 0.5 * C * std::pow(eta, gamma);
    }
    return t;
}

struct SpectralReport {
    std::vector<SpectralMode> modes;
    RhoBounds rho;
    double eta = 0.0;
    double beta = 0.0;
    bool stable = true;
    std::vector<double> unstable_lambdas;

    std::string to_csv() const {
        std::ostringstream out;
        out << "lambda,kappa_plus_re,kappa_plus_im,kappa_minus_re,kappa_minus_im,case,abs_kappa_plus,"
               "abs_kappa_minus,rho1,rho2\n";
        for (const SpectralMode& m : modes) {
            out << csv::fmt(m.lambda) << ',' << csv::fmt(m.kappa_plus.real()) << ','
                << csv::fmt(m.kappa_plus.imag()) << ',' << csv::fmt(m.kappa_minus.real()) << ','
                << csv::fmt(m.kappa_minus.imag()) << ',' << to_string(m.case_tag) << ','
                << csv::fmt(std::abs(m.kappa_plus)) << ',' << csv::fmt(std::abs(m.kappa_minus)) << ",,\n";
        }
        out << ",,,,,summary,,," << (stable ? csv::fmt(rho.rho1) : "") << ','
            << (stable ? csv::fmt(rho.rho2) : "") << '\n';
        return out.str();
    }
};

inline SpectralReport spectral_report(const RealVector& spectrum, double eta, double beta,
                                      double rank_tol = kDefaultRankTol) {
    SpectralReport r;
    r.eta = eta;
    r.beta = beta;
    for (Index i = 0; i < spectrum.size(); ++i) r.modes.push_back(mode_eigs(std::max(spectrum(i), 0.0), eta, beta));
    try {
        r.rho = rho_bounds(spectrum, eta, beta, rank_tol);
    } catch (const InstabilityError& e) {
        r.stable = false;
        r.unstable_lambdas = e.offending_eigenvalues();
    }
    return r;
}

}  // namespace momlab
