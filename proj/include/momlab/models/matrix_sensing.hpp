#pragma once

#include <vector>

#include <Eigen/SVD>

#include "momlab/models/model.hpp"

namespace momlab {

struct SensingDataset {
    Index d = 0;
    Index r = 0;
    std::vector<Matrix> a;  // P sensing matrices, d x d
    RealVector y;           // y_i = Tr(A_i X*)
    Matrix x_star;          // rank-r target

    Index size() const { return static_cast<Index>(a.size()); }
};

inline double trace_product(const Matrix& a, const Matrix& x) { return (a.transpose().cwiseProduct(x)).sum(); }

/// Best rank-r approximation of m (top-r singular triplets).
inline Matrix truncate_rank(const Matrix& m, Index r) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    RealVector s = svd.singularValues();
    for (Index i = r; i < s.size(); ++i) s(i) = 0.0;
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

/// Gaussian sensing matrices; X* is a Gaussian matrix truncated to rank r.
inline SensingDataset generate_sensing_dataset(Index d, Index r, Index samples, RandomStream& rng) {
    if (d <= 0 || r <= 0 || r > d || samples <= 0) throw ContractViolation("invalid matrix sensing sizes");
    SensingDataset ds;
    ds.d = d;
    ds.r = r;
    Matrix x0(d, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) x0(i, j) = rng.normal();
    ds.x_star = truncate_rank(x0, r);
    ds.a.reserve(samples);
    ds.y.resize(samples);
    for (Index s = 0; s < samples; ++s) {
        Matrix a(d, d);
        for (Index j = 0; j < d; ++j)
            for (Index i = 0; i < d; ++i) a(i, j) = rng.normal();
        ds.y(s) = trace_product(a, ds.x_star);
        ds.a.push_back(std::move(a));
    }
    return ds;
}

/// Asymmetric matrix sensing with X = U V:
///   L(U, V) = (1/dP) sum_i (y_i - Tr(A_i U V))^2.
///
/// Parameters are (vec U, vec V) in column-major order, D = 2 d^2. The
/// label-noise constant is 2/(dP): sigma sigma^T = (2/(dP)) H on the manifold.
class MatrixSensingModel {
   public:
    explicit MatrixSensingModel(SensingDataset data) : data_(std::move(data)) {
        const Index d = data_.d;
        const Index p = data_.size();
        if (d <= 0 || p == 0 || data_.y.size() != p) throw ContractViolation("malformed sensing dataset");
        // Row i holds vec(A_i^T), so (stack * vec X)_i = Tr(A_i X).
        stack_.resize(p, d * d);
        for (Index i = 0; i < p; ++i) {
            const Matrix at = data_.a[i].transpose();
            stack_.row(i) = Eigen::Map<const RealVector>(at.data(), d * d).transpose();
        }
        sigma1_ = Matrix::Zero(d, d);
        sigma2_ = Matrix::Zero(d, d);
        for (const Matrix& a : data_.a) {
            sigma1_ += a * a.transpose();
            sigma2_ += a.transpose() * a;
        }
        sigma1_ /= static_cast<double>(p);
        sigma2_ /= static_cast<double>(p);
    }

    Index d() const { return data_.d; }
    Index dim() const { return 2 * data_.d * data_.d; }
    Index samples() const { return data_.size(); }
    const SensingDataset& data() const { return data_; }
    RealVector labels() const { return data_.y; }
    double kappa() const { return 2.0 / (static_cast<double>(data_.d) * static_cast<double>(samples())); }
    double label_noise_constant() const { return kappa(); }
    /// (1/P) sum A A^T and (1/P) sum A^T A.
    const Matrix& sigma1() const { return sigma1_; }
    const Matrix& sigma2() const { return sigma2_; }

    Eigen::Map<const Matrix> u_of(const RealVector& w) const { return {w.data(), d(), d()}; }
    Eigen::Map<const Matrix> v_of(const RealVector& w) const { return {w.data() + d() * d(), d(), d()}; }

    static RealVector pack(const Matrix& u, const Matrix& v) {
        RealVector w(u.size() + v.size());
        w.head(u.size()) = Eigen::Map<const RealVector>(u.data(), u.size());
        w.tail(v.size()) = Eigen::Map<const RealVector>(v.data(), v.size());
        return w;
    }

    /// U = V = I.
    RealVector identity_init() const { return pack(Matrix::Identity(d(), d()), Matrix::Identity(d(), d())); }

    Matrix product(const RealVector& w) const { return u_of(w) * v_of(w); }

    /// Tr(A_i U V) - y_i.
    RealVector residuals(const RealVector& w, const RealVector& labels) const {
        const Matrix x = product(w);
        return stack_ * Eigen::Map<const RealVector>(x.data(), x.size()) - labels;
    }

    double loss(const RealVector& w) const { return loss(w, data_.y); }
    double loss(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim(), "sensing loss");
        check_dim(labels.size(), samples(), "sensing labels");
        return residuals(w, labels).squaredNorm() / (static_cast<double>(d()) * static_cast<double>(samples()));
    }

    RealVector gradient(const RealVector& w) const { return gradient(w, data_.y); }
    RealVector gradient(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim(), "sensing gradient");
        check_dim(labels.size(), samples(), "sensing labels");
        const Matrix rt = weighted_sum_transposed(residuals(w, labels));
        return pack(kappa() * rt * v_of(w).transpose(), kappa() * u_of(w).transpose() * rt);
    }

    RealVector hessian_vector(const RealVector& w, const RealVector& dir) const {
        check_dim(w.size(), dim(), "sensing hvp");
        check_dim(dir.size(), dim(), "sensing hvp direction");
        const auto u = u_of(w);
        const auto v = v_of(w);
        const auto du = u_of(dir);
        const auto dv = v_of(dir);
        const Matrix rt = weighted_sum_transposed(residuals(w, data_.y));
        const Matrix dx = du * v + u * dv;
        const Matrix drt = weighted_sum_transposed(stack_ * Eigen::Map<const RealVector>(dx.data(), dx.size()));
        return pack(kappa() * (drt * v.transpose() + rt * dv.transpose()),
                    kappa() * (u.transpose() * drt + du.transpose() * rt));
    }

    SymMatrix hessian(const RealVector& w) const { return hessian_from_hvp(*this, w); }

    /// Exact up to roundoff: H(w) is quadratic in w, so central differences of H q are exact.
    RealVector third_derivative_contract(const RealVector& w, const SymMatrix& s) const {
        return third_derivative_by_differences(*this, w, s);
    }

    /// (2/d) Tr(Sigma2 U U^T + Sigma1 V^T V); the Hessian trace on the zero-loss manifold.
    double trace_hessian(const RealVector& w) const {
        const auto u = u_of(w);
        const auto v = v_of(w);
        return (2.0 / static_cast<double>(d())) *
               ((sigma2_ * u * u.transpose()).trace() + (sigma1_ * v.transpose() * v).trace());
    }

    RealVector trace_hessian_gradient(const RealVector& w) const {
        const double c = 4.0 / static_cast<double>(d());
        return pack(c * sigma2_ * u_of(w), c * v_of(w) * sigma1_);
    }

    /// Columns kappa * grad f_i with grad f_i = (A_i^T V^T, U^T A_i^T).
    Matrix noise_factor(const RealVector& w) const {
        check_dim(w.size(), dim(), "sensing noise factor");
        const auto u = u_of(w);
        const auto v = v_of(w);
        Matrix s(dim(), samples());
        for (Index i = 0; i < samples(); ++i) {
            const Matrix& a = data_.a[i];
            s.col(i) = kappa() * pack(a.transpose() * v.transpose(), u.transpose() * a.transpose());
        }
        return s;
    }

    /// Expected test loss over fresh Gaussian A with noise decoupled: |UV - X*|_F^2 / d.
    double test_error(const RealVector& w) const {
        return (product(w) - data_.x_star).squaredNorm() / static_cast<double>(d());
    }

   private:
    // (sum_i c_i A_i)^T as a d x d matrix.
    Matrix weighted_sum_transposed(const RealVector& c) const {
        const RealVector flat = stack_.transpose() * c;
        return Eigen::Map<const Matrix>(flat.data(), d(), d());
    }

    SensingDataset data_;
    Matrix stack_;
    Matrix sigma1_;
    Matrix sigma2_;
};

}  // namespace momlab
