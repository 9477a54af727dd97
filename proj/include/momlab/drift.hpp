#pragma once

// Slow motion along the zero-loss manifold: projectors, the momentum-modified
// Lyapunov operator
//   Lt_H S = {H, S} + (1/2) C^-2 eta^(1-2 gamma) [[S, H], H],
// the general drift field, its label-noise reduction and an SDE integrator.
//
// Time is measured in optimizer steps (t = k). Sigma arguments are the
// unit-amplitude sigma sigma^T; epsilon^2 is applied here.

#include <cmath>
#include <string>
#include <vector>

#include "momlab/models/model.hpp"
#include "momlab/optimizer.hpp"

namespace momlab {

struct ManifoldChart {
    RealVector w;
    SymMatrix h;
    RealVector values;   // Hessian eigenvalues, descending
    Matrix vectors;
    Index rank = 0;      // D - M
    SymMatrix p_t;       // onto range(H)
    SymMatrix p_l;       // onto the tangent space
    SymMatrix h_dagger;
    bool degenerate = false;      // no tangent directions (M = 0)
    bool rank_ambiguous = false;  // an eigenvalue sits within 10x of the threshold
    std::string warning;

    Index dim() const { return h.size(); }
    Matrix transverse_basis() const { return vectors.leftCols(rank); }
    RealVector transverse_values() const { return values.head(rank); }
};

inline ManifoldChart tangent_projectors(const SymMatrix& h, double rank_tol = kDefaultRankTol) {
    if (!(rank_tol > 0)) throw ContractViolation("rank_tol must be positive");
    ManifoldChart c;
    c.h = h;
    const SymEigen eig = sym_eigendecomposition(h);
    c.values = eig.values;
    c.vectors = eig.vectors;
    const Index n = h.size();
    const double lmax = n ? std::max(eig.values(0), 0.0) : 0.0;
    const double thr = rank_tol * lmax;
    for (Index i = 0; i < n; ++i) {
        const double l = eig.values(i);
        if (lmax > 0 && l > thr) ++c.rank;
        if (lmax > 0 && std::abs(l) > thr / 10.0 && std::abs(l) < thr * 10.0) c.rank_ambiguous = true;
    }
    if (lmax > 0 && eig.values(n - 1) < -1e-9 * lmax)
        c.warning = "Hessian has negative eigenvalue " + csv::fmt(eig.values(n - 1)) + "; point may be off the manifold";
    if (c.rank_ambiguous) {
        if (!c.warning.empty()) c.warning += "; ";
        c.warning += "rank ambiguous: an eigenvalue lies within a factor 10 of the threshold";
    }
    const Matrix q = eig.vectors.leftCols(c.rank);
    const RealVector lt = eig.values.head(c.rank);
    c.p_t = SymMatrix::symmetrized(q * q.transpose());
    c.p_l = SymMatrix::symmetrized(Matrix::Identity(n, n) - c.p_t.matrix());
    c.h_dagger = SymMatrix::symmetrized(q * lt.cwiseInverse().asDiagonal() * q.transpose());
    c.degenerate = c.rank == n;
    return c;
}

template <LossModel M>
ManifoldChart chart_at(const M& model, const RealVector& w, double rank_tol = kDefaultRankTol) {
    ManifoldChart c = tangent_projectors(model.hessian(w), rank_tol);
    c.w = w;
    return c;
}

inline double ltilde_coefficient(double eta, double gamma, double C) {
    if (!(eta > 0) || !(C > 0)) throw InvalidHyperparameter("eta and C must be positive");
    return 0.5 * std::pow(eta, 1.0 - 2.0 * gamma) / (C * C);
}

/// S = S^T and P_T S P_T = S to 1e-9 (relative).
inline void require_in_wh(const ManifoldChart& c, const Matrix& s, const char* what) {
    if (s.rows() != c.dim() || s.cols() != c.dim()) throw ContractViolation(std::string(what) + ": size mismatch");
    const double scale = std::max(max_abs(s), 1e-300);
    if (max_abs(s - s.transpose()) > 1e-9 * scale) throw DomainError(std::string(what) + " is not symmetric");
    const Matrix proj = c.p_t.matrix() * s * c.p_t.matrix();
    if (max_abs(proj - s) > 1e-9 * scale) throw DomainError(std::string(what) + " is not supported on range(H)");
}

inline Matrix ltilde_apply(const ManifoldChart& c, const Matrix& s, double eta, double gamma, double C) {
    require_in_wh(c, s, "ltilde_apply argument");
    const Matrix& h = c.h.matrix();
    const double k = ltilde_coefficient(eta, gamma, C);
    // Nested commutator rather than the expanded SHH - 2HSH + HHS, whose
    // terms cancel at |H|^2 |S| and cost roughly a third more accuracy.
    const Matrix x = s * h - h * s;
    return h * s + s * h + k * (x * h - h * x);
}

inline Matrix ltilde_apply(const SymMatrix& h, const Matrix& s, double eta, double gamma, double C,
                           double rank_tol = kDefaultRankTol) {
    return ltilde_apply(tangent_projectors(h, rank_tol), s, eta, gamma, C);
}

/// Entrywise in H's positive eigenbasis:
///   S_ij = M_ij / (l_i + l_j + (1/2) C^-2 eta^(1-2 gamma) (l_i - l_j)^2).
inline SymMatrix ltilde_inverse(const ManifoldChart& c, const Matrix& m, double eta, double gamma, double C) {
    require_in_wh(c, m, "ltilde_inverse argument");
    const double k = ltilde_coefficient(eta, gamma, C);
    const Matrix q = c.transverse_basis();
    const RealVector l = c.transverse_values();
    Matrix mq = q.transpose() * m * q;
    for (Index i = 0; i < c.rank; ++i)
        for (Index j = 0; j < c.rank; ++j) {
            const double d = l(i) - l(j);
            mq(i, j) /= l(i) + l(j) + k * d * d;
        }
    return SymMatrix::symmetrized(q * mq * q.transpose());
}

inline SymMatrix ltilde_inverse(const SymMatrix& h, const Matrix& m, double eta, double gamma, double C,
                                double rank_tol = kDefaultRankTol) {
    return ltilde_inverse(tangent_projectors(h, rank_tol), m, eta, gamma, C);
}

struct DriftField {
    RealVector drift;
    RealVector ll;  // -(1/2C^2) eta^(2-2g) H^+ d2(gradL)[Sigma_LL]; lies in range(H)
    RealVector tl;  // -(1/C^2) eta^(2-2g) P_L d2(gradL)[H^+ Sigma_TL]
    RealVector tt;  // -(1/2C^2) eta^(2-2g) P_L d2(gradL)[Lt^-1 Sigma_TT]
    double diffusion_factor = 0.0;  // epsilon (C^-1 eta^(1-g) + eta), multiplies P_L sigma dW
    bool degenerate = false;

    RealVector tangential() const { return tl + tt; }
};

inline double drift_prefactor(double eta, double gamma, double C) {
    return std::pow(eta, 2.0 - 2.0 * gamma) / (C * C);
}

inline double diffusion_factor(double eta, double gamma, double C, double epsilon) {
    return epsilon * (std::pow(eta, 1.0 - gamma) / C + eta);
}

template <LossModel M>
DriftField limiting_drift(const M& model, const ManifoldChart& chart, const SymMatrix& sigma, double eta,
                          double gamma, double C, double epsilon = 1.0) {
    const Index n = chart.dim();
    check_dim(sigma.size(), n, "limiting_drift Sigma");
    if (!(eta > 0) || !(C > 0)) throw InvalidHyperparameter("eta and C must be positive");
    const SymEigen se = sym_eigendecomposition(sigma);
    const double smax = se.values.size() ? se.values.cwiseAbs().maxCoeff() : 0.0;
    if (smax > 0 && se.values(n - 1) < -1e-9 * smax) throw DomainError("Sigma is not positive semidefinite");

    DriftField f;
    f.diffusion_factor = diffusion_factor(eta, gamma, C, epsilon);
    f.ll = f.tl = f.tt = f.drift = RealVector::Zero(n);
    if (chart.degenerate) {
        f.degenerate = true;
        return f;
    }
    const double pref = epsilon * epsilon * drift_prefactor(eta, gamma, C);
    const Matrix& pl = chart.p_l.matrix();
    const Matrix& pt = chart.p_t.matrix();
    const Matrix& s = sigma.matrix();
    const Matrix s_ll = pl * s * pl;
    const Matrix s_tl = pt * s * pl;
    const Matrix s_tt = pt * s * pt;
    const RealVector& w = chart.w;

    if (max_abs(s_ll) > 0)
        f.ll = -0.5 * pref * (chart.h_dagger.matrix() * model.third_derivative_contract(w, SymMatrix::symmetrized(s_ll)));
    if (max_abs(s_tl) > 0)
        f.tl = -pref * (pl * model.third_derivative_contract(
                                 w, SymMatrix::symmetrized(chart.h_dagger.matrix() * s_tl)));
    if (max_abs(s_tt) > 0) {
        const SymMatrix inv = ltilde_inverse(chart, SymMatrix::symmetrized(s_tt).matrix(), eta, gamma, C);
        f.tt = -0.5 * pref * (pl * model.third_derivative_contract(w, inv));
    }
    f.drift = f.ll + f.tl + f.tt;
    return f;
}

/// -(eps^2 eta^(2-2g) / 4C^2) P_L grad Tr(c H), after checking sigma sigma^T = c H.
template <LossModel M>
DriftField label_noise_drift(const M& model, const ManifoldChart& chart, double c, double eta, double gamma,
                             double C, double epsilon, double mismatch_tol = 1e-6) {
    if (!(eta > 0) || !(C > 0)) throw InvalidHyperparameter("eta and C must be positive");
    const Matrix sig = model.noise_factor(chart.w);
    const Matrix cov = sig * sig.transpose();
    const Matrix target = c * chart.h.matrix();
    const double denom = target.norm();
    const double err = (cov - target).norm();
    if (denom > 0 ? err > mismatch_tol * denom : err > mismatch_tol)
        throw ModelMismatch("sigma sigma^T differs from c H (relative Frobenius error " +
                            csv::fmt(denom > 0 ? err / denom : err) + ")");
    DriftField f;
    const Index n = chart.dim();
    f.diffusion_factor = diffusion_factor(eta, gamma, C, epsilon);
    f.ll = f.tl = RealVector::Zero(n);
    if (chart.degenerate) {
        f.degenerate = true;
        f.tt = f.drift = RealVector::Zero(n);
        return f;
    }
    const double pref = epsilon * epsilon * drift_prefactor(eta, gamma, C) / 4.0;
    f.tt = -pref * c * (chart.p_l.matrix() * model.trace_hessian_gradient(chart.w));
    f.drift = f.tt;
    return f;
}

/// tau2^-1 = eta^(2-2g) eps^2 mu2 / (2 n P C^2).
inline double uv_drift_rate(double eta, double gamma, double C, double epsilon, double mu2, double n, double P) {
    if (!(eta > 0) || !(C > 0) || !(n > 0) || !(P > 0) || mu2 < 0 || epsilon < 0)
        throw InvalidHyperparameter("uv_drift_rate arguments out of range");
    return std::pow(eta, 2.0 - 2.0 * gamma) * epsilon * epsilon * mu2 / (2.0 * n * P * C * C);
}

/// C = (eps^2 mu2 / (P n))^(1/3), from matching (C/2) eta^g with tau2^-1.
inline double optimal_C(double epsilon, double mu2, double P, double n) {
    if (epsilon < 0 || mu2 < 0 || !(P > 0) || !(n > 0)) throw InvalidHyperparameter("optimal_C arguments out of range");
    return std::cbrt(epsilon * epsilon * mu2 / (P * n));
}

/// C^3 = 2 eps^2 <a^2> / (d P).
inline double matrix_sensing_C(double epsilon_sq, double a_second_moment, double d, double P) {
    if (epsilon_sq < 0 || a_second_moment < 0 || !(d > 0) || !(P > 0))
        throw InvalidHyperparameter("matrix_sensing_C arguments out of range");
    return std::cbrt(2.0 * epsilon_sq * a_second_moment / (d * P));
}

struct DriftTrajectory {
    std::vector<double> t;
    std::vector<RealVector> w;
    long retraction_steps = 0;
    long substeps = 0;
};

class IntegrationFailure : public Error {
   public:
    IntegrationFailure(const std::string& msg, DriftTrajectory partial)
        : Error("integration failure: " + msg), partial_(std::move(partial)) {}
    const DriftTrajectory& partial() const noexcept { return partial_; }

   private:
    DriftTrajectory partial_;
};

struct IntegrateOptions {
    double dt = 1.0;
    long record_every = 1;
    double retraction_tol = 1e-12;
    bool general_drift = false;  // limiting_drift with Sigma = sigma sigma^T instead of the corollary
    double rank_tol = kDefaultRankTol;
    ProjectionOptions projection;
};

/// Euler-Maruyama on the manifold SDE, retracting to loss < tol after every step.
template <LossModel M>
DriftTrajectory integrate_drift(const M& model, const RealVector& w0, double eta, double gamma, double C,
                                double epsilon, double T, RandomStream& rng, const IntegrateOptions& opt = {}) {
    check_dim(w0.size(), model.dim(), "integrate_drift");
    if (!(opt.dt > 0) || !(T >= 0)) throw ContractViolation("integrate_drift needs dt > 0 and T >= 0");
    if (model.loss(w0) >= opt.retraction_tol * 1e3)
        throw ContractViolation("integrate_drift requires w0 on the zero-loss manifold");
    DriftTrajectory traj;
    traj.t.push_back(0.0);
    traj.w.push_back(w0);
    if (epsilon == 0.0) {
        // No noise, no drift: the manifold point is a fixed point.
        for (double t = opt.dt; t <= T + 1e-12 * opt.dt; t += opt.dt * static_cast<double>(opt.record_every)) {
            traj.t.push_back(t);
            traj.w.push_back(w0);
        }
        return traj;
    }
    const double c = model.label_noise_constant();
    RealVector w = w0;
    double t = 0.0;
    long k = 0;
    const long total = static_cast<long>(std::llround(T / opt.dt));
    while (k < total) {
        const ManifoldChart chart = chart_at(model, w, opt.rank_tol);
        const Matrix sig = model.noise_factor(w);
        const DriftField f =
            opt.general_drift
                ? limiting_drift(model, chart, SymMatrix::symmetrized(sig * sig.transpose()), eta, gamma, C, epsilon)
                : label_noise_drift(model, chart, c, eta, gamma, C, epsilon, 1e-4);
        // Sub-step when one step would move more than 1% of |w|.
        const double move = f.drift.norm() * opt.dt;
        const double limit = 0.01 * std::max(w.norm(), 1e-300);
        const long sub = move > limit ? static_cast<long>(std::ceil(move / limit)) : 1;
        const double h = opt.dt / static_cast<double>(sub);
        const Matrix plsig = chart.p_l.matrix() * sig;
        for (long s = 0; s < sub; ++s) {
            RealVector xi(plsig.cols());
            rng.fill_normal(xi);
            w += f.drift * h + f.diffusion_factor * std::sqrt(h) * (plsig * xi);
        }
        traj.substeps += sub - 1;
        try {
            const ProjectionResult r = project_to_manifold(model, w, opt.retraction_tol, opt.projection);
            w = r.w;
            traj.retraction_steps += r.steps;
        } catch (const ProjectionFailure& e) {
            throw IntegrationFailure(std::string("retraction failed at t = ") + csv::fmt(t) + ": " + e.what(), traj);
        }
        ++k;
        t = static_cast<double>(k) * opt.dt;
        if (k % opt.record_every == 0 || k == total) {
            traj.t.push_back(t);
            traj.w.push_back(w);
        }
    }
    return traj;
}

}  // namespace momlab
