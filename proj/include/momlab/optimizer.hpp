#pragma once

// Heavy-ball SGD with label noise:
//   pi' = beta * pi - grad L~(w),   w' = w + eta * pi'
// where L~ uses labels resampled every step.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "momlab/csv.hpp"
#include "momlab/models/model.hpp"

namespace momlab {

/// 1 - C eta^gamma; no clamping.
inline double beta_from_scaling(double eta, double gamma, double C) {
    if (!(eta > 0) || !std::isfinite(eta)) throw InvalidHyperparameter("eta must be positive and finite");
    if (!(C > 0) || !std::isfinite(C)) throw InvalidHyperparameter("C must be positive and finite");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidHyperparameter("gamma must lie in [0, 1]");
    const double beta = 1.0 - C * std::pow(eta, gamma);
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw InvalidHyperparameter("beta = 1 - C eta^gamma = " + csv::fmt(beta) + " outside [0, 1)");
    }
    return beta;
}

struct HyperParams {
    double eta = 0.0;
    double gamma = std::numeric_limits<double>::quiet_NaN();  // NaN when beta was given explicitly
    double C = std::numeric_limits<double>::quiet_NaN();
    double beta = 0.0;
    double epsilon = 0.0;

    static HyperParams scaled(double eta, double gamma, double C, double epsilon) {
        HyperParams h{eta, gamma, C, beta_from_scaling(eta, gamma, C), epsilon};
        h.validate();
        return h;
    }
    static HyperParams explicit_beta(double eta, double beta, double epsilon) {
        HyperParams h;
        h.eta = eta;
        h.beta = beta;
        h.epsilon = epsilon;
        if (beta < 1.0 && eta > 0) h.C = (1.0 - beta) / eta;  // gamma = 1 reading
        h.validate();
        return h;
    }

    void validate() const {
        if (!(eta > 0) || !std::isfinite(eta)) throw InvalidHyperparameter("eta must be positive and finite");
        if (!(beta >= 0.0 && beta < 1.0)) throw InvalidHyperparameter("beta must lie in [0, 1)");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidHyperparameter("epsilon must be >= 0");
    }
};

struct OptimizerState {
    RealVector pi;
    RealVector w;
    long k = 0;

    static OptimizerState at_rest(const RealVector& w) { return {RealVector::Zero(w.size()), w, 0}; }
};

// Anything past this magnitude (or non-finite) counts as divergence.
inline constexpr double kDivergenceBound = 1e12;

inline bool state_diverged(const OptimizerState& s) {
    if (!s.w.allFinite() || !s.pi.allFinite()) return true;
    return s.w.squaredNorm() > kDivergenceBound || s.pi.squaredNorm() > kDivergenceBound;
}

struct TrajectoryRecord {
    std::vector<long> step;
    std::vector<double> loss;
    std::vector<double> weight_norm_sq;
    std::vector<double> momentum_norm_sq;
    std::vector<double> trace_hessian;
    std::vector<double> test_error;
    bool has_trace_hessian = false;
    bool has_test_error = false;

    std::size_t size() const { return step.size(); }
    bool empty() const { return step.empty(); }

    std::string to_csv() const {
        std::ostringstream out;
        out << "step,loss,weight_norm_sq,momentum_norm_sq,trace_hessian,test_error\n";
        for (std::size_t i = 0; i < size(); ++i) {
            out << step[i] << ',' << csv::fmt(loss[i]) << ',' << csv::fmt(weight_norm_sq[i]) << ','
                << csv::fmt(momentum_norm_sq[i]) << ','
                << csv::fmt_opt(has_trace_hessian ? trace_hessian[i] : 0.0, has_trace_hessian) << ','
                << csv::fmt_opt(has_test_error ? test_error[i] : 0.0, has_test_error) << '\n';
        }
        return out.str();
    }

    static TrajectoryRecord from_csv(const csv::Table& t) {
        TrajectoryRecord r;
        const int cs = t.require_column("step"), cl = t.require_column("loss");
        const int cw = t.require_column("weight_norm_sq"), cm = t.require_column("momentum_norm_sq");
        const int ct = t.require_column("trace_hessian"), ce = t.require_column("test_error");
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            r.step.push_back(static_cast<long>(t.number(i, cs)));
            r.loss.push_back(t.number(i, cl));
            r.weight_norm_sq.push_back(t.number(i, cw));
            r.momentum_norm_sq.push_back(t.number(i, cm));
            r.trace_hessian.push_back(t.number(i, ct));
            r.test_error.push_back(t.number(i, ce));
        }
        if (!r.trace_hessian.empty()) r.has_trace_hessian = !std::isnan(r.trace_hessian.front());
        if (!r.test_error.empty()) r.has_test_error = !std::isnan(r.test_error.front());
        return r;
    }
};

/// Raised when an update leaves the finite/bounded region. Carries the last
/// finite state and whatever was recorded before that.
class DivergenceError : public Error {
   public:
    DivergenceError(const std::string& msg, OptimizerState last, TrajectoryRecord partial = {})
        : Error("divergence: " + msg), detail_(msg), last_(std::move(last)), partial_(std::move(partial)) {}
    const std::string& detail() const noexcept { return detail_; }
    const OptimizerState& last_finite_state() const noexcept { return last_; }
    const TrajectoryRecord& partial_record() const noexcept { return partial_; }

   private:
    std::string detail_;
    OptimizerState last_;
    TrajectoryRecord partial_;
};

template <LossModel M>
OptimizerState sgdm_step(const OptimizerState& state, const M& model, const NoiseMap& noise,
                         const HyperParams& hyper, RandomStream& rng) {
    check_dim(state.w.size(), model.dim(), "sgdm_step w");
    check_dim(state.pi.size(), model.dim(), "sgdm_step pi");
    OptimizerState next;
    if (noise.silent()) {
        next.pi = hyper.beta * state.pi - model.gradient(state.w);
    } else {
        next.pi = hyper.beta * state.pi - model.gradient(state.w, noisy_labels(model, noise, rng));
    }
    next.w = state.w + hyper.eta * next.pi;
    next.k = state.k + 1;
    if (state_diverged(next)) throw DivergenceError("step " + std::to_string(next.k) + " left the finite region", state);
    return next;
}

enum class StopKind { max_steps, observable_below_threshold, loss_below_threshold };

/// observable_below_threshold watches |w|^2 (|u|^2 + |v|^2 for UV).
struct StopRule {
    StopKind kind = StopKind::max_steps;
    double threshold = 0.0;
    long max_steps = 0;

    static StopRule steps(long n) { return {StopKind::max_steps, 0.0, n}; }
    static StopRule norm_below(double thr, long cap) { return {StopKind::observable_below_threshold, thr, cap}; }
    static StopRule loss_below(double thr, long cap) { return {StopKind::loss_below_threshold, thr, cap}; }
};

struct RecordOptions {
    long record_every = 10;
    bool trace_hessian = true;
};

template <LossModel M>
void record_observables(TrajectoryRecord& rec, const M& model, const OptimizerState& s, const RecordOptions& opt) {
    rec.step.push_back(s.k);
    rec.loss.push_back(model.loss(s.w));
    rec.weight_norm_sq.push_back(s.w.squaredNorm());
    rec.momentum_norm_sq.push_back(s.pi.squaredNorm());
    rec.has_trace_hessian = opt.trace_hessian;
    rec.trace_hessian.push_back(opt.trace_hessian ? model.trace_hessian(s.w) : std::nan(""));
    if constexpr (requires { model.test_error(s.w); }) {
        rec.has_test_error = true;
        rec.test_error.push_back(model.test_error(s.w));
    } else {
        rec.test_error.push_back(std::nan(""));
    }
}

struct TrajectoryResult {
    TrajectoryRecord record;
    OptimizerState final_state;
    bool stopped_by_rule = false;  // threshold reached (as opposed to hitting max_steps)
};

template <LossModel M>
TrajectoryResult run_trajectory(const M& model, const NoiseMap& noise, const HyperParams& hyper,
                                const OptimizerState& init, const StopRule& stop, const RecordOptions& opt,
                                RandomStream& rng) {
    hyper.validate();
    if (opt.record_every <= 0) throw ContractViolation("record_every must be positive");
    if (stop.max_steps < 0) throw ContractViolation("max_steps must be non-negative");
    TrajectoryResult out;
    OptimizerState s = init;
    record_observables(out.record, model, s, opt);

    auto fired = [&](const OptimizerState& st) {
        switch (stop.kind) {
            case StopKind::max_steps:
                return false;
            case StopKind::observable_below_threshold:
                return st.w.squaredNorm() < stop.threshold;
            case StopKind::loss_below_threshold:
                return model.loss(st.w) < stop.threshold;
        }
        return false;
    };

    if (fired(s)) {
        out.stopped_by_rule = true;
        out.final_state = s;
        return out;
    }
    const long last = init.k + stop.max_steps;
    while (s.k < last) {
        try {
            s = sgdm_step(s, model, noise, hyper, rng);
        } catch (const DivergenceError& e) {
            throw DivergenceError(e.detail(), e.last_finite_state(), out.record);
        }
        const bool done = fired(s);
        if (done || (s.k - init.k) % opt.record_every == 0 || s.k == last) {
            record_observables(out.record, model, s, opt);
            const double l = out.record.loss.back();
            if (!std::isfinite(l) || l > kDivergenceBound)
                throw DivergenceError("loss left the finite region at step " + std::to_string(s.k), s, out.record);
        }
        if (done) {
            out.stopped_by_rule = true;
            break;
        }
    }
    out.final_state = s;
    return out;
}

/// Largest-magnitude Hessian eigenvalue by power iteration on HVPs.
template <LossModel M>
double hessian_spectral_radius(const M& model, const RealVector& w, int iterations = 100) {
    RealVector q = RealVector::Ones(w.size()) / std::sqrt(static_cast<double>(w.size()));
    double lambda = 0.0;
    for (int i = 0; i < iterations; ++i) {
        RealVector hq = model.hessian_vector(w, q);
        const double nrm = hq.norm();
        if (nrm == 0.0) return 0.0;
        const double next = q.dot(hq);
        q = hq / nrm;
        if (i > 5 && std::abs(std::abs(next) - std::abs(lambda)) <= 1e-10 * std::abs(next)) return std::abs(next);
        lambda = next;
    }
    return std::abs(lambda);
}

struct ProjectionOptions {
    double beta = 0.9;
    double margin = 0.1;  // eta = margin * 2 (1 + beta) / lambda_max
    long max_steps = 200000;
    double eta = 0.0;     // > 0 overrides the margin rule
};

struct ProjectionResult {
    RealVector w;
    long steps = 0;
};

/// Noiseless momentum GD until loss < tol, starting from pi = 0.
template <LossModel M>
ProjectionResult project_to_manifold(const M& model, const RealVector& w, double tol,
                                     const ProjectionOptions& opt = {}) {
    check_dim(w.size(), model.dim(), "project_to_manifold");
    if (!(tol > 0)) throw ContractViolation("projection tolerance must be positive");
    if (model.loss(w) < tol) return {w, 0};
    double eta = opt.eta;
    if (!(eta > 0)) {
        const double lmax = hessian_spectral_radius(model, w);
        if (!(lmax > 0) || !std::isfinite(lmax)) throw ProjectionFailure("Hessian spectral radius is zero", 0);
        eta = opt.margin * 2.0 * (1.0 + opt.beta) / lmax;
    }
    RealVector pi = RealVector::Zero(w.size());
    RealVector x = w;
    for (long k = 1; k <= opt.max_steps; ++k) {
        pi = opt.beta * pi - model.gradient(x);
        x += eta * pi;
        if (!x.allFinite()) throw ProjectionFailure("iterate became non-finite", static_cast<std::size_t>(k));
        if (model.loss(x) < tol) return {x, k};
    }
    throw ProjectionFailure("loss still above " + csv::fmt(tol) + " after step budget",
                            static_cast<std::size_t>(opt.max_steps));
}

}  // namespace momlab
