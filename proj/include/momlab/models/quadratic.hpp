#pragma once

#include <cmath>

#include "momlab/models/model.hpp"

namespace momlab {

/// Linear least squares L(w) = 1/2 |B w - y|^2. Constant Hessian B^T B, so
/// third derivatives vanish; with B = sqrt(lambda) I and y = 0 this is the
/// toy loss lambda/2 |w|^2.
class QuadraticModel {
   public:
    QuadraticModel(Matrix design, RealVector targets) : b_(std::move(design)), y_(std::move(targets)) {
        if (b_.rows() != y_.size()) throw ContractViolation("design/target mismatch");
    }

    static QuadraticModel isotropic(Index dim, double lambda) {
        return {std::sqrt(lambda) * Matrix::Identity(dim, dim), RealVector::Zero(dim)};
    }

    Index dim() const { return b_.cols(); }
    const Matrix& design() const { return b_; }
    RealVector labels() const { return y_; }
    double label_noise_constant() const { return 1.0; }

    double loss(const RealVector& w) const { return loss(w, y_); }
    double loss(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim(), "quadratic loss");
        return 0.5 * (b_ * w - labels).squaredNorm();
    }
    RealVector gradient(const RealVector& w) const { return gradient(w, y_); }
    RealVector gradient(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim(), "quadratic gradient");
        return b_.transpose() * (b_ * w - labels);
    }
    RealVector hessian_vector(const RealVector&, const RealVector& v) const { return b_.transpose() * (b_ * v); }
    SymMatrix hessian(const RealVector& w) const {
        check_dim(w.size(), dim(), "quadratic hessian");
        return SymMatrix::symmetrized(b_.transpose() * b_);
    }
    RealVector third_derivative_contract(const RealVector& w, const SymMatrix&) const {
        return RealVector::Zero(w.size());
    }
    double trace_hessian(const RealVector&) const { return b_.squaredNorm(); }
    RealVector trace_hessian_gradient(const RealVector& w) const { return RealVector::Zero(w.size()); }
    Matrix noise_factor(const RealVector&) const { return b_.transpose(); }

   private:
    Matrix b_;
    RealVector y_;
};

}  // namespace momlab
