#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "momlab/models/model.hpp"

namespace momlab {

enum class Activation { linear, tanh, relu };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ContractViolation("unknown activation '" + s + "'");
}

/// Forward-mode dual number; carries a directional derivative alongside the value.
struct Dual {
    double v = 0.0;
    double d = 0.0;
    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit from constants
    Dual(double value, double deriv) : v(value), d(deriv) {}
    Dual& operator+=(const Dual& o) {
        v += o.v;
        d += o.d;
        return *this;
    }
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, double b) { return {a.v / b, a.d / b}; }

namespace detail {

inline double act(Activation a, double z) {
    switch (a) {
        case Activation::linear: return z;
        case Activation::tanh: return std::tanh(z);
        case Activation::relu: return z > 0.0 ? z : 0.0;
    }
    return z;
}
inline double act_deriv(Activation a, double z) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;  // a.e. derivative
    }
    return 1.0;
}
inline Dual act(Activation a, Dual z) {
    switch (a) {
        case Activation::linear: return z;
        case Activation::tanh: {
            const double t = std::tanh(z.v);
            return {t, (1.0 - t * t) * z.d};
        }
        case Activation::relu: return z.v > 0.0 ? z : Dual{};
    }
    return z;
}
inline Dual act_deriv(Activation a, Dual z) {
    switch (a) {
        case Activation::linear: return Dual{1.0};
        case Activation::tanh: {
            const double t = std::tanh(z.v);
            const double s = 1.0 - t * t;
            return {s, -2.0 * t * s * z.d};
        }
        case Activation::relu: return Dual{z.v > 0.0 ? 1.0 : 0.0};
    }
    return Dual{1.0};
}

}  // namespace detail

/// Fully connected network f(x) = W_L phi(... phi(W_1 x / sqrt(d_0)) ...) / sqrt(d_{L-1})
/// with squared loss (1/2P) sum_a |y_a - f(x_a)|^2. Every layer is scaled by
/// 1/sqrt(fan_in); no biases. With one hidden layer of width n, scalar
/// input/output and linear activation this is the vector UV model.
///
/// Parameters are the row-major weight matrices concatenated layer by layer.
class MLPModel {
   public:
    MLPModel(Activation activation, std::vector<Index> widths, Matrix inputs, Matrix targets)
        : act_(activation), widths_(std::move(widths)), x_(std::move(inputs)), y_(std::move(targets)) {
        if (widths_.size() < 2) throw ContractViolation("MLP needs at least input and output widths");
        if (x_.cols() != widths_.front()) throw ContractViolation("input width mismatch");
        if (y_.cols() != widths_.back()) throw ContractViolation("output width mismatch");
        if (x_.rows() != y_.rows() || x_.rows() == 0) throw ContractViolation("inputs/targets row mismatch");
        dim_ = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            offsets_.push_back(dim_);
            dim_ += widths_[l] * widths_[l + 1];
        }
    }

    /// Parameters matching a vector UV point (u, v): W1 = v, W2 = u^T.
    static RealVector from_uv(const RealVector& u, const RealVector& v) {
        RealVector p(u.size() + v.size());
        p << v, u;
        return p;
    }

    Index dim() const { return dim_; }
    Index samples() const { return x_.rows(); }
    Activation activation() const { return act_; }
    const std::vector<Index>& widths() const { return widths_; }
    const Matrix& inputs() const { return x_; }

    RealVector labels() const {
        RealVector y(y_.size());
        for (Index a = 0; a < y_.rows(); ++a)
            for (Index k = 0; k < y_.cols(); ++k) y(a * y_.cols() + k) = y_(a, k);
        return y;
    }

    double label_noise_constant() const { return 1.0 / static_cast<double>(samples()); }

    double loss(const RealVector& w) const { return loss(w, labels()); }
    double loss(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim_, "MLP loss");
        check_dim(labels.size(), y_.size(), "MLP labels");
        const Batch b = batch_forward(w, x_);
        return 0.5 * (b.a.back() - label_matrix(labels)).squaredNorm() / static_cast<double>(samples());
    }

    RealVector gradient(const RealVector& w) const { return gradient(w, labels()); }
    RealVector gradient(const RealVector& w, const RealVector& labels) const {
        check_dim(w.size(), dim_, "MLP gradient");
        check_dim(labels.size(), y_.size(), "MLP labels");
        const Batch b = batch_forward(w, x_);
        const std::size_t layers = widths_.size() - 1;
        RealVector g(dim_);
        Matrix delta = (b.a.back() - label_matrix(labels)) / static_cast<double>(samples());
        for (std::size_t l = layers; l-- > 0;) {
            const Index in = widths_[l], out = widths_[l + 1];
            const double scale = 1.0 / std::sqrt(static_cast<double>(in));
            Eigen::Map<RowMatrix>(g.data() + offsets_[l], out, in) = scale * delta.transpose() * b.a[l];
            if (l == 0) break;
            Matrix back = scale * delta * weight(w, l);
            switch (act_) {
                case Activation::linear: break;
                case Activation::tanh: back.array() *= 1.0 - b.a[l].array().square(); break;
                case Activation::relu: back.array() *= (b.z[l].array() > 0.0).cast<double>(); break;
            }
            delta = std::move(back);
        }
        return g;
    }

    /// Exact H(w) v by forward-mode differentiation of the backward pass.
    RealVector hessian_vector(const RealVector& w, const RealVector& v) const {
        check_dim(w.size(), dim_, "MLP hvp");
        check_dim(v.size(), dim_, "MLP hvp direction");
        std::vector<Dual> pw(dim_), g(dim_);
        for (Index i = 0; i < dim_; ++i) pw[i] = Dual{w(i), v(i)};
        Pass<Dual> pass = make_pass<Dual>();
        const Index dout = widths_.back();
        const double p = static_cast<double>(samples());
        const RealVector y = labels();
        std::vector<Dual> delta(dout);
        for (Index a = 0; a < samples(); ++a) {
            forward(pw.data(), a, pass);
            for (Index k = 0; k < dout; ++k) delta[k] = (pass.a.back()[k] - Dual{y(a * dout + k)}) / p;
            backward(pw.data(), pass, delta, g.data());
        }
        RealVector out(dim_);
        for (Index i = 0; i < dim_; ++i) out(i) = g[i].d;
        return out;
    }

    SymMatrix hessian(const RealVector& w) const { return hessian_from_hvp(*this, w); }

    RealVector third_derivative_contract(const RealVector& w, const SymMatrix& s) const {
        return third_derivative_by_differences(*this, w, s);
    }

    /// Columns: grad f_k(x_a) for every (sample, output) pair, sample-major.
    Matrix output_jacobian(const RealVector& w) const {
        check_dim(w.size(), dim_, "MLP jacobian");
        const Index dout = widths_.back();
        Matrix j(dim_, samples() * dout);
        Pass<double> pass = make_pass<double>();
        std::vector<double> delta(dout), g(dim_);
        for (Index a = 0; a < samples(); ++a) {
            forward(w.data(), a, pass);
            for (Index k = 0; k < dout; ++k) {
                std::fill(delta.begin(), delta.end(), 0.0);
                delta[k] = 1.0;
                std::fill(g.begin(), g.end(), 0.0);
                backward(w.data(), pass, delta, g.data());
                j.col(a * dout + k) = Eigen::Map<RealVector>(g.data(), dim_);
            }
        }
        return j;
    }

    Matrix noise_factor(const RealVector& w) const { return label_noise_constant() * output_jacobian(w); }

    /// Gauss-Newton trace (1/P) sum |grad f|^2; equals Tr(H) on the zero-loss manifold.
    double trace_hessian(const RealVector& w) const {
        return label_noise_constant() * output_jacobian(w).squaredNorm();
    }

    /// Gradient of the Gauss-Newton trace: (2/P) sum (grad^2 f) grad f.
    RealVector trace_hessian_gradient(const RealVector& w) const {
        const Matrix jac = output_jacobian(w);
        const Index dout = widths_.back();
        RealVector out = RealVector::Zero(dim_);
        std::vector<Dual> pw(dim_), g(dim_), delta(dout);
        Pass<Dual> pass = make_pass<Dual>();
        for (Index a = 0; a < samples(); ++a) {
            for (Index k = 0; k < dout; ++k) {
                const Index col = a * dout + k;
                for (Index i = 0; i < dim_; ++i) pw[i] = Dual{w(i), jac(i, col)};
                forward(pw.data(), a, pass);
                std::fill(delta.begin(), delta.end(), Dual{});
                delta[k] = Dual{1.0};
                std::fill(g.begin(), g.end(), Dual{});
                backward(pw.data(), pass, delta, g.data());
                for (Index i = 0; i < dim_; ++i) out(i) += g[i].d;
            }
        }
        return 2.0 * label_noise_constant() * out;
    }

    /// Network outputs for arbitrary inputs (rows), e.g. a held-out set.
    Matrix predict(const RealVector& w, const Matrix& inputs) const {
        check_dim(w.size(), dim_, "MLP predict");
        if (inputs.cols() != widths_.front()) throw ContractViolation("input width mismatch");
        return batch_forward(w, inputs).a.back();
    }

   private:
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    // Whole-batch pass in double precision; rows are samples.
    struct Batch {
        std::vector<Matrix> z;
        std::vector<Matrix> a;
    };

    Eigen::Map<const RowMatrix> weight(const RealVector& w, std::size_t l) const {
        return {w.data() + offsets_[l], widths_[l + 1], widths_[l]};
    }

    Matrix label_matrix(const RealVector& labels) const {
        return Eigen::Map<const RowMatrix>(labels.data(), y_.rows(), y_.cols());
    }

    Batch batch_forward(const RealVector& w, const Matrix& inputs) const {
        const std::size_t layers = widths_.size() - 1;
        Batch b;
        b.z.resize(layers + 1);
        b.a.resize(layers + 1);
        b.a[0] = inputs;
        for (std::size_t l = 0; l < layers; ++l) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
            b.z[l + 1] = scale * b.a[l] * weight(w, l).transpose();
            if (l + 1 < layers)
                b.a[l + 1] = b.z[l + 1].unaryExpr([this](double z) { return detail::act(act_, z); });
            else
                b.a[l + 1] = b.z[l + 1];
        }
        return b;
    }

    template <class T>
    struct Pass {
        std::vector<std::vector<T>> z;  // pre-activations per layer (index 0 unused)
        std::vector<std::vector<T>> a;  // activations; a[0] is the input
    };

    template <class T>
    Pass<T> make_pass() const {
        Pass<T> p;
        p.z.resize(widths_.size());
        p.a.resize(widths_.size());
        for (std::size_t l = 0; l < widths_.size(); ++l) {
            p.z[l].assign(widths_[l], T{});
            p.a[l].assign(widths_[l], T{});
        }
        return p;
    }

    template <class T>
    void forward(const T* params, Index sample, Pass<T>& pass) const {
        const std::size_t layers = widths_.size() - 1;
        for (Index j = 0; j < widths_[0]; ++j) pass.a[0][j] = T{x_(sample, j)};
        for (std::size_t l = 0; l < layers; ++l) {
            const Index in = widths_[l], out = widths_[l + 1];
            const double scale = 1.0 / std::sqrt(static_cast<double>(in));
            const T* wl = params + offsets_[l];
            for (Index i = 0; i < out; ++i) {
                T acc{0.0};
                for (Index j = 0; j < in; ++j) acc += wl[i * in + j] * pass.a[l][j];
                pass.z[l + 1][i] = acc * T{scale};
                pass.a[l + 1][i] = (l + 1 < layers) ? detail::act(act_, pass.z[l + 1][i]) : pass.z[l + 1][i];
            }
        }
    }

    // delta holds dLoss/dOutput on entry; gradients accumulate into grad.
    template <class T>
    void backward(const T* params, const Pass<T>& pass, std::vector<T> delta, T* grad) const {
        const std::size_t layers = widths_.size() - 1;
        for (std::size_t l = layers; l-- > 0;) {
            const Index in = widths_[l], out = widths_[l + 1];
            const double scale = 1.0 / std::sqrt(static_cast<double>(in));
            const T* wl = params + offsets_[l];
            T* gl = grad + offsets_[l];
            std::vector<T> ds(out);
            for (Index i = 0; i < out; ++i) {
                ds[i] = delta[i] * T{scale};
                for (Index j = 0; j < in; ++j) gl[i * in + j] += ds[i] * pass.a[l][j];
            }
            if (l == 0) break;
            std::vector<T> prev(in);
            for (Index j = 0; j < in; ++j) {
                T acc{0.0};
                for (Index i = 0; i < out; ++i) acc += wl[i * in + j] * ds[i];
                prev[j] = acc * detail::act_deriv(act_, pass.z[l][j]);
            }
            delta = std::move(prev);
        }
    }

    Activation act_;
    std::vector<Index> widths_;
    Matrix x_;
    Matrix y_;
    std::vector<Index> offsets_;
    Index dim_ = 0;
};

}  // namespace momlab
