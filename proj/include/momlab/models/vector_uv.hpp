#pragma once

#include <cmath>

#include "momlab/models/model.hpp"

namespace momlab {

struct UVDataset {
    RealVector x;  // scalar inputs
    RealVector y;  // scalar labels

    Index size() const { return x.size(); }
    /// Dataset variance mu2 = (1/P) sum x_a^2.
    double mu2() const { return x.squaredNorm() / static_cast<double>(x.size()); }
};

/// i.i.d. standard Gaussian inputs drawn once, all labels zero.
inline UVDataset generate_uv_dataset(Index samples, RandomStream& rng) {
    if (samples <= 0) throw ContractViolation("dataset size must be positive");
    UVDataset ds;
    ds.x = gaussian_stream(rng, samples);
    ds.y = RealVector::Zero(samples);
    return ds;
}

/// Two-layer linear network with scalar input and output:
///   L(u, v) = (1/2P) sum_a (y_a - (u.v) x_a / sqrt(n))^2,  params w = (u, v).
///
/// With y = 0 the zero-loss manifold is {u.v = 0} and the Hessian there is
/// rank one, H = (mu2/n) g g^T with g = (v, u).
class VectorUVModel {
   public:
    VectorUVModel(Index width, UVDataset data) : n_(width), data_(std::move(data)) {
        if (n_ <= 0) throw ContractViolation("hidden width must be positive");
        if (data_.x.size() != data_.y.size() || data_.x.size() == 0)
            throw ContractViolation("UV dataset inputs/labels mismatch");
        mu2_ = data_.mu2();
        xy_ = data_.x.dot(data_.y) / static_cast<double>(data_.size());
    }

    Index dim() const { return 2 * n_; }
    Index width() const { return n_; }
    Index samples() const { return data_.size(); }
    const UVDataset& data() const { return data_; }
    double mu2() const { return mu2_; }
    RealVector labels() const { return data_.y; }
    double label_noise_constant() const { return 1.0 / static_cast<double>(samples()); }

    auto u(const RealVector& w) const { return w.head(n_); }
    auto v(const RealVector& w) const { return w.tail(n_); }

    /// |u|^2 + |v|^2.
    double weight_norm_sq(const RealVector& w) const { return w.squaredNorm(); }

    // loss() and gradient() follow the MLPModel kernel's per-sample operation
    // order exactly, so the linear MLP reproduces them bit for bit.
    double loss(const RealVector& w) const { return loss(w, data_.y); }
    double loss(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim(), "UV loss");
        check_dim(labels.size(), samples(), "UV labels");
        const double s1 = 1.0 / std::sqrt(1.0);
        const double s2 = 1.0 / std::sqrt(static_cast<double>(n_));
        double total = 0.0;
        for (Index a = 0; a < samples(); ++a) {
            double acc = 0.0;
            for (Index j = 0; j < n_; ++j) {
                const double z = (0.0 + w(n_ + j) * data_.x(a)) * s1;
                acc += w(j) * z;
            }
            const double r = acc * s2 - labels(a);
            total += r * r;
        }
        return 0.5 * total / static_cast<double>(samples());
    }

    RealVector gradient(const RealVector& w) const { return gradient(w, data_.y); }
    RealVector gradient(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim(), "UV gradient");
        check_dim(labels.size(), samples(), "UV labels");
        const double s1 = 1.0 / std::sqrt(1.0);
        const double s2 = 1.0 / std::sqrt(static_cast<double>(n_));
        const double p = static_cast<double>(samples());
        RealVector g = RealVector::Zero(dim());
        RealVector z(n_);
        for (Index a = 0; a < samples(); ++a) {
            double acc = 0.0;
            for (Index j = 0; j < n_; ++j) {
                z(j) = (0.0 + w(n_ + j) * data_.x(a)) * s1;
                acc += w(j) * z(j);
            }
            const double delta = (acc * s2 - labels(a)) / p;
            const double ds = delta * s2;
            for (Index j = 0; j < n_; ++j) g(j) += ds * z(j);
            for (Index j = 0; j < n_; ++j) {
                const double back = (0.0 + w(j) * ds) * 1.0;
                g(n_ + j) += (back * s1) * data_.x(a);
            }
        }
        return g;
    }

    // Closed forms below use L = (a/2) s^2 - b s + const with s = u.v,
    // a = mu2/n, b = (1/(P sqrt n)) sum y x, g = grad s = (v, u) and
    // K = grad^2 s = [[0, I], [I, 0]].

    RealVector hessian_vector(const RealVector& w, const RealVector& dir) const {
        check_dim(w.size(), dim(), "UV hvp");
        check_dim(dir.size(), dim(), "UV hvp direction");
        const RealVector g = grad_s(w);
        const double coeff = curvature() * s_of(w) - linear_coeff();
        return curvature() * g.dot(dir) * g + coeff * swap_halves(dir);
    }

    SymMatrix hessian(const RealVector& w) const {
        check_dim(w.size(), dim(), "UV hessian");
        const RealVector g = grad_s(w);
        Matrix h = curvature() * g * g.transpose();
        const double coeff = curvature() * s_of(w) - linear_coeff();
        for (Index j = 0; j < n_; ++j) {
            h(j, n_ + j) += coeff;
            h(n_ + j, j) += coeff;
        }
        return SymMatrix::symmetrized(h);
    }

    /// Exact contraction a * (tr(K S) g + 2 K S g).
    RealVector third_derivative_contract(const RealVector& w, const SymMatrix& s) const {
        check_dim(w.size(), dim(), "UV third derivative");
        check_dim(s.size(), dim(), "UV third derivative matrix");
        const Matrix& m = s.matrix();
        const RealVector g = grad_s(w);
        const double tr_ks = 2.0 * m.block(0, n_, n_, n_).trace();
        return curvature() * (tr_ks * g + 2.0 * swap_halves(m * g));
    }

    /// (1/n)(m Tr(Sigma V^T V) + Tr(Sigma) Tr(U U^T)) with m = 1 and Sigma = mu2.
    double trace_hessian(const RealVector& w) const {
        return (mu2_ * v(w).squaredNorm() + mu2_ * u(w).squaredNorm()) / static_cast<double>(n_);
    }

    RealVector trace_hessian_gradient(const RealVector& w) const {
        return (2.0 * mu2_ / static_cast<double>(n_)) * w;
    }

    /// sigma_{., a} = (1/P) grad f(x_a) = (1/P) (x_a / sqrt n) (v, u).
    Matrix noise_factor(const RealVector& w) const {
        check_dim(w.size(), dim(), "UV noise factor");
        const RealVector g = grad_s(w);
        const double scale = 1.0 / (static_cast<double>(samples()) * std::sqrt(static_cast<double>(n_)));
        Matrix s(dim(), samples());
        for (Index a = 0; a < samples(); ++a) s.col(a) = (scale * data_.x(a)) * g;
        return s;
    }

    double s_of(const RealVector& w) const { return u(w).dot(v(w)); }
    RealVector grad_s(const RealVector& w) const {
        RealVector g(dim());
        g << v(w), u(w);
        return g;
    }

   private:
    double curvature() const { return mu2_ / static_cast<double>(n_); }
    double linear_coeff() const { return xy_ / std::sqrt(static_cast<double>(n_)); }
    RealVector swap_halves(const RealVector& x) const {
        RealVector out(dim());
        out << x.tail(n_), x.head(n_);
        return out;
    }

    Index n_;
    UVDataset data_;
    double mu2_ = 0.0;
    double xy_ = 0.0;
};

}  // namespace momlab
