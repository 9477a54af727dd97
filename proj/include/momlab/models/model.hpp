#pragma once

#include <concepts>
#include <string>

#include "momlab/numerics.hpp"

namespace momlab {

// A differentiable training loss with squared-error structure
//   L(w; y) = (kappa / 2) * sum_a |y_a - f_a(w)|^2
// over a fixed dataset. Every model exposes its labels so that label noise
// can be injected by resampling them each step.
template <class M>
concept LossModel = requires(const M& m, const RealVector& w, const RealVector& v, const SymMatrix& s) {
    { m.dim() } -> std::convertible_to<Index>;
    { m.labels() } -> std::convertible_to<RealVector>;
    { m.loss(w) } -> std::convertible_to<double>;
    { m.loss(w, v) } -> std::convertible_to<double>;
    { m.gradient(w) } -> std::convertible_to<RealVector>;
    { m.gradient(w, v) } -> std::convertible_to<RealVector>;
    { m.hessian_vector(w, v) } -> std::convertible_to<RealVector>;
    { m.hessian(w) } -> std::convertible_to<SymMatrix>;
    { m.third_derivative_contract(w, s) } -> std::convertible_to<RealVector>;
    { m.trace_hessian(w) } -> std::convertible_to<double>;
    { m.trace_hessian_gradient(w) } -> std::convertible_to<RealVector>;
    { m.noise_factor(w) } -> std::convertible_to<Matrix>;
    { m.label_noise_constant() } -> std::convertible_to<double>;
};

inline void check_dim(Index got, Index want, const char* what) {
    if (got != want) {
        throw ContractViolation(std::string(what) + ": dimension " + std::to_string(got) +
                                " does not match model dimension " + std::to_string(want));
    }
}

enum class NoiseKind {
    label_gaussian,  // y -> y + eps * xi, xi ~ N(0, 1)
    label_flip,      // +-1 targets flip sign with probability p; clean labels are the expectation
};

/// Label-noise specification. sigma(w) is provided by the model (noise_factor);
/// the injected gradient noise is epsilon * sigma(w) * xi.
struct NoiseMap {
    double epsilon = 0.0;
    NoiseKind kind = NoiseKind::label_gaussian;
    double flip_probability = 0.0;

    static NoiseMap gaussian(double eps) { return {eps, NoiseKind::label_gaussian, 0.0}; }
    static NoiseMap flip(double p) { return {1.0, NoiseKind::label_flip, p}; }
    bool silent() const {
        return kind == NoiseKind::label_gaussian ? epsilon == 0.0 : flip_probability == 0.0;
    }
};

/// Fresh perturbed label set for one optimizer step.
template <LossModel M>
RealVector noisy_labels(const M& model, const NoiseMap& noise, RandomStream& rng) {
    RealVector y = model.labels();
    switch (noise.kind) {
        case NoiseKind::label_gaussian:
            if (noise.epsilon == 0.0) return y;
            for (Index i = 0; i < y.size(); ++i) y(i) += noise.epsilon * rng.normal();
            return y;
        case NoiseKind::label_flip: {
            const double p = noise.flip_probability;
            if (!(p >= 0.0 && p < 0.5)) throw ContractViolation("flip probability must lie in [0, 0.5)");
            const double unscale = 1.0 / (1.0 - 2.0 * p);
            for (Index i = 0; i < y.size(); ++i) {
                const double sign = rng.uniform() < p ? -1.0 : 1.0;
                y(i) = sign * y(i) * unscale;
            }
            return y;
        }
    }
    return y;
}

/// Sigma = sigma sigma^T for unit-amplitude label noise.
template <LossModel M>
SymMatrix noise_covariance(const M& model, const RealVector& w) {
    const Matrix s = model.noise_factor(w);
    return SymMatrix::symmetrized(s * s.transpose());
}

/// Dense Hessian assembled column by column from Hessian-vector products.
template <class M>
SymMatrix hessian_from_hvp(const M& model, const RealVector& w) {
    const Index n = w.size();
    Matrix h(n, n);
    RealVector e = RealVector::Zero(n);
    for (Index j = 0; j < n; ++j) {
        e(j) = 1.0;
        h.col(j) = model.hessian_vector(w, e);
        e(j) = 0.0;
    }
    return SymMatrix::symmetrized(h);
}

/// sum_ij d_i d_j (grad L)_k S_ij, via central differences of H(w) q along
/// the eigendirections q of S, Richardson-extrapolated from steps h and h/2
/// with h = 1e-3 * (1 + |w|); the error is O(h^4).
template <class M>
RealVector third_derivative_by_differences(const M& model, const RealVector& w, const SymMatrix& s) {
    check_dim(s.size(), w.size(), "third_derivative_contract");
    const double h = 1e-3 * (1.0 + w.norm());
    const SymEigen eig = sym_eigendecomposition(s);
    RealVector out = RealVector::Zero(w.size());
    const double scale = eig.values.size() ? eig.values.cwiseAbs().maxCoeff() : 0.0;
    auto central = [&](const RealVector& q, double step) {
        return RealVector((model.hessian_vector(w + step * q, q) - model.hessian_vector(w - step * q, q)) / (2.0 * step));
    };
    for (Index m = 0; m < eig.values.size(); ++m) {
        const double sm = eig.values(m);
        if (std::abs(sm) <= 1e-15 * scale || sm == 0.0) continue;
        const RealVector q = eig.vectors.col(m);
        out += sm * (4.0 * central(q, 0.5 * h) - central(q, h)) / 3.0;
    }
    if (!out.allFinite()) throw NumericalFailure("third derivative contraction is not finite");
    return out;
}

}  // namespace momlab
