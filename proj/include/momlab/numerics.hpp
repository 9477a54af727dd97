#pragma once

// Shared numerical kernels: symmetric matrices, eigendecomposition,
// pseudoinverse, central-difference gradients and reproducible Gaussian
// streams.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "momlab/errors.hpp"

namespace momlab {

using RealVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kDefaultRankTol = 1e-8;

inline bool all_finite(const RealVector& v) { return v.allFinite(); }

inline void require_finite(const RealVector& v, const char* what) {
    if (!v.allFinite()) throw NumericalFailure(std::string(what) + " has non-finite entries");
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Square matrix that is symmetric by construction.
///
/// The checked constructor accepts inputs whose antisymmetric part is at most
/// 1e-12 of the largest entry and stores the exact symmetric part.
class SymMatrix {
   public:
    SymMatrix() = default;

    explicit SymMatrix(const Matrix& m) {
        if (m.rows() != m.cols()) throw ContractViolation("SymMatrix requires a square matrix");
        if (!m.allFinite()) throw NumericalFailure("SymMatrix has non-finite entries");
        const double scale = max_abs(m);
        const double asym = max_abs(m - m.transpose());
        if (asym > 1e-12 * scale) {
            throw ContractViolation("matrix is not symmetric (|A-A^T|_max = " + std::to_string(asym) +
                                    ")");
        }
        m_ = 0.5 * (m + m.transpose());
    }

    /// Symmetric part of an arbitrary square matrix; never throws on asymmetry.
    static SymMatrix symmetrized(const Matrix& m) {
        if (m.rows() != m.cols()) throw ContractViolation("SymMatrix requires a square matrix");
        SymMatrix s;
        s.m_ = 0.5 * (m + m.transpose());
        return s;
    }
    static SymMatrix identity(Index n) { return symmetrized(Matrix::Identity(n, n)); }
    static SymMatrix zero(Index n) { return symmetrized(Matrix::Zero(n, n)); }
    static SymMatrix diagonal(const RealVector& d) { return symmetrized(d.asDiagonal().toDenseMatrix()); }
    static SymMatrix outer(const RealVector& q) { return symmetrized(q * q.transpose()); }

    const Matrix& matrix() const noexcept { return m_; }
    Index size() const noexcept { return m_.rows(); }
    double operator()(Index i, Index j) const { return m_(i, j); }
    double trace() const { return m_.trace(); }

    friend SymMatrix operator*(double a, const SymMatrix& s) { return symmetrized(a * s.m_); }
    friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) { return symmetrized(a.m_ + b.m_); }
    friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) { return symmetrized(a.m_ - b.m_); }

   private:
    Matrix m_;
};

struct SymEigen {
    RealVector values;  // descending
    Matrix vectors;     // orthonormal columns, aligned with values
};

/// A = Q diag(values) Q^T with eigenvalues sorted in descending order.
inline SymEigen sym_eigendecomposition(const SymMatrix& a) {
    const Index n = a.size();
    if (n == 0) return {RealVector(0), Matrix(0, 0)};
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix());
    if (solver.info() != Eigen::Success) {
        // Eigen's tridiagonal QR gives up after 30 sweeps per dimension.
        throw NumericalFailure("symmetric eigensolver did not converge",
                               static_cast<std::size_t>(30 * n));
    }
    SymEigen out;
    out.values = solver.eigenvalues().reverse();
    out.vectors = solver.eigenvectors().rowwise().reverse();
    return out;
}

/// Moore-Penrose pseudoinverse; eigenvalues with |lambda| <= rank_tol * max|lambda| count as zero.
inline SymMatrix pseudo_inverse(const SymMatrix& a, double rank_tol = kDefaultRankTol) {
    if (!(rank_tol > 0)) throw ContractViolation("rank_tol must be positive");
    const SymEigen eig = sym_eigendecomposition(a);
    const Index n = a.size();
    if (n == 0) return a;
    const double scale = eig.values.cwiseAbs().maxCoeff();
    RealVector inv = RealVector::Zero(n);
    for (Index i = 0; i < n; ++i) {
        if (std::abs(eig.values(i)) > rank_tol * scale) inv(i) = 1.0 / eig.values(i);
    }
    return SymMatrix::symmetrized(eig.vectors * inv.asDiagonal() * eig.vectors.transpose());
}

/// Number of eigenvalues above rank_tol * max|lambda|.
inline Index numerical_rank(const RealVector& values, double rank_tol = kDefaultRankTol) {
    if (values.size() == 0) return 0;
    const double scale = values.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < values.size(); ++i)
        if (std::abs(values(i)) > rank_tol * scale) ++r;
    return r;
}

/// Central-difference gradient, O(h^2) accurate.
template <class F>
RealVector finite_diff_gradient(F&& f, const RealVector& w, double h) {
    if (!(h > 0)) throw ContractViolation("finite difference step must be positive");
    RealVector g(w.size());
    RealVector x = w;
    for (Index i = 0; i < w.size(); ++i) {
        const double orig = x(i);
        x(i) = orig + h;
        const double fp = f(x);
        x(i) = orig - h;
        const double fm = f(x);
        x(i) = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw EvaluationFailure("non-finite function value at coordinate " + std::to_string(i));
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a, used for stable per-cell stream indices.
inline std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Reproducible random stream.
///
/// Engine: MT19937-64 (std::mt19937_64, whose output sequence is fixed by the
/// C++ standard), seeded with splitmix64(seed ^ splitmix64(stream_index)).
/// Uniforms take the top 53 bits of each draw. Normals use the Box-Muller
/// transform on (1 - u1, u2), emitting the cosine branch first and caching
/// the sine branch for the next call.
class RandomStream {
   public:
    static constexpr const char* algorithm_id = "mt19937_64+splitmix64/box-muller";

    RandomStream(std::uint64_t seed, std::uint64_t stream_index = 0)
        : seed_(seed), stream_index_(stream_index), engine_(splitmix64(seed ^ splitmix64(stream_index))) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_index() const noexcept { return stream_index_; }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(RealVector& out) {
        for (Index i = 0; i < out.size(); ++i) out(i) = normal();
    }

   private:
    std::uint64_t seed_;
    std::uint64_t stream_index_;
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

inline RealVector gaussian_stream(RandomStream& rng, Index count) {
    if (count < 0) throw ContractViolation("count must be non-negative");
    RealVector out(count);
    rng.fill_normal(out);
    return out;
}

}  // namespace momlab
