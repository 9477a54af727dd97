#pragma once

// Experiment configuration: YAML in, validated structs out.
// Unknown keys and out-of-range values raise ConfigError with the source
// line/column of the offending node.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "momlab/csv.hpp"
#include "momlab/errors.hpp"
#include "momlab/numerics.hpp"

namespace momlab {

enum class ExperimentKind { uv_timescale, matrix_sensing, spectral_report, drift_compare, beta_star_protocol };

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::uv_timescale: return "uv-timescale";
        case ExperimentKind::matrix_sensing: return "matrix-sensing";
        case ExperimentKind::spectral_report: return "spectral-report";
        case ExperimentKind::drift_compare: return "drift-compare";
        case ExperimentKind::beta_star_protocol: return "beta-star-protocol";
    }
    return "?";
}

/// Log-spaced grid with `count` points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int count) {
    std::vector<double> g;
    if (count == 1) return {lo};
    for (int i = 0; i < count; ++i)
        g.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (count - 1)));
    return g;
}

struct UVSettings {
    long width = 10;
    long samples = 5;
    std::string activation = "linear";
    std::uint64_t dataset_seed = 0;
    std::uint64_t init_seed = 0;
    double epsilon = 0.5;
    double C = 0.2;
    std::vector<double> gammas{0.3, 0.5, 2.0 / 3.0, 0.8};
    std::vector<double> etas = log_grid(1e-3, 1e-1, 6);
    double stop_fraction = 0.1;  // stop once |u|^2 + |v|^2 < stop_fraction * n
    long max_steps = 5000000;
    long record_every = 1;
    long max_saved_records = 2000;  // longer records are thinned before fitting and saving
    bool init_on_manifold = true;
    double fit_skip_fraction = 0.2;
    // joint C fit (fit subcommand / acceptance); empty grid disables it
    std::vector<double> joint_c_grid;
    int joint_refine = 8;
};

struct SensingSettings {
    long d = 20;
    long r = 2;
    long samples = 200;
    std::uint64_t dataset_seed = 0;
    double eta = 0.1;
    double epsilon_sq = 0.1;
    std::vector<double> betas{0.0, 0.5, 0.8, 0.9, 0.95, 0.97, 0.99};
    long steps = 20000;
    long record_every = 50;
    double final_window = 0.25;  // fraction of records averaged for "final" values
};

struct BetaStarSettings {
    long input_dim = 10;
    long hidden = 32;
    long samples = 256;
    long test_samples = 2000;
    long teacher_hidden = 8;
    std::uint64_t dataset_seed = 0;
    double flip_probability = 0.2;
    std::vector<double> etas{0.5, 1.0, 2.0};
    std::vector<double> one_minus_beta{0.3, 0.2, 0.13, 0.08, 0.05, 0.035, 0.025, 0.018, 0.012, 0.008, 0.005, 0.003};
    long steps = 2000;
    double phase1_beta = 0.9;
    double interpolation_tol = 1e-4;
    long projection_max_steps = 20000;
    std::string metric = "neg_trace_hessian";  // test_accuracy | neg_test_loss | neg_trace_hessian
};

struct DriftSettings {
    long width = 10;
    long samples = 5;
    std::uint64_t dataset_seed = 0;
    std::uint64_t init_seed = 0;
    double eta = 0.01;
    double gamma = 0.5;
    double C = 0.2;
    double epsilon = 0.5;
    long segments = 50;
    long segment_steps = 2000;
    long burn_in = 200;
    std::vector<double> scaling_etas{1e-3, 3e-3, 1e-2};
};

struct SpectralSettings {
    long width = 10;
    long samples = 5;
    std::uint64_t dataset_seed = 0;
    std::uint64_t init_seed = 0;
    double eta = 0.01;
    double gamma = 2.0 / 3.0;
    double C = 0.2;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::uv_timescale;
    std::string output_dir = "out";
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int parallelism = 1;
    bool paper_scale = false;
    UVSettings uv;
    SensingSettings sensing;
    BetaStarSettings beta_star;
    DriftSettings drift;
    SpectralSettings spectral;

    /// Canonical text of every resolved setting; hashed into RunRecords.
    std::string canonical() const;
    std::string hash() const {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(stable_hash(canonical())));
        return buf;
    }
    void validate() const;
    /// d = 100, r = 5, P = 2500 as in the original matrix sensing study.
    void apply_paper_scale() {
        paper_scale = true;
        sensing.d = 100;
        sensing.r = 5;
        sensing.samples = 2500;
    }
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv::fmt(v[i]);
    return s + "]";
}

[[noreturn]] inline void config_fail(const YAML::Node& n, const std::string& msg) {
    const YAML::Mark m = n.Mark();
    if (m.is_null()) throw ConfigError(msg);
    throw ConfigError(msg, m.line + 1, m.column + 1);
}

class Reader {
   public:
    explicit Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
        if (node_ && !node_.IsMap()) config_fail(node_, "'" + path_ + "' must be a mapping");
    }

    /// Rejects keys that were never asked for.
    void finish() const {
        if (!node_) return;
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            const std::string key = it->first.as<std::string>();
            if (!seen_.count(key)) config_fail(it->first, "unknown key '" + qualified(key) + "'");
        }
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!node_) return;
        const YAML::Node n = lookup(key);
        if (!n) return;
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            config_fail(n, "'" + qualified(key) + "' has the wrong type");
        }
    }

    void get_list(const char* key, std::vector<double>& out) {
        seen_.insert(key);
        if (!node_) return;
        const YAML::Node n = lookup(key);
        if (!n) return;
        if (!n.IsSequence()) config_fail(n, "'" + qualified(key) + "' must be a list");
        std::vector<double> v;
        for (const auto& e : n) {
            try {
                v.push_back(e.as<double>());
            } catch (const YAML::Exception&) {
                config_fail(e, "'" + qualified(key) + "' entries must be numbers");
            }
        }
        out = v;
    }

    /// A grid given either as a list or as {min, max, count} (log-spaced).
    void get_grid(const char* key, std::vector<double>& out) {
        seen_.insert(key);
        if (!node_) return;
        const YAML::Node n = lookup(key);
        if (!n) return;
        if (n.IsSequence()) {
            seen_.erase(key);
            get_list(key, out);
            return;
        }
        Reader r(n, qualified(key));
        double lo = 0, hi = 0;
        int count = 0;
        r.get("min", lo);
        r.get("max", hi);
        r.get("count", count);
        r.finish();
        if (!(lo > 0) || !(hi >= lo) || count < 1) config_fail(n, "'" + qualified(key) + "' needs 0 < min <= max, count >= 1");
        out = log_grid(lo, hi, count);
    }

    YAML::Node child(const char* key) {
        seen_.insert(key);
        return node_ ? lookup(key) : YAML::Node();
    }
    const YAML::Node& node() const { return node_; }
    YAML::Node at(const char* key) const { return node_ ? lookup(key) : YAML::Node(); }
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

   private:
    // Const access: the mutable operator[] would insert missing keys.
    YAML::Node lookup(const char* key) const {
        const YAML::Node& n = node_;
        return n[key];
    }

    YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void require(bool ok, const YAML::Node& where, const std::string& msg) {
    if (!ok) {
        if (where) config_fail(where, msg);
        throw ConfigError(msg);
    }
}

}  // namespace detail

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (ExperimentKind k : {ExperimentKind::uv_timescale, ExperimentKind::matrix_sensing,
                             ExperimentKind::spectral_report, ExperimentKind::drift_compare,
                             ExperimentKind::beta_star_protocol})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown experiment kind '" + s + "'");
}

inline std::string ExperimentConfig::canonical() const {
    std::ostringstream o;
    using detail::join_doubles;
    o << "kind=" << to_string(kind) << ";seeds=";
    for (auto s : seeds) o << s << ',';
    o << ";paper_scale=" << paper_scale;
    switch (kind) {
        case ExperimentKind::uv_timescale:
            o << ";n=" << uv.width << ";P=" << uv.samples << ";act=" << uv.activation << ";ds=" << uv.dataset_seed
              << ";is=" << uv.init_seed << ";eps=" << csv::fmt(uv.epsilon) << ";C=" << csv::fmt(uv.C)
              << ";gammas=" << join_doubles(uv.gammas) << ";etas=" << join_doubles(uv.etas)
              << ";stop=" << csv::fmt(uv.stop_fraction) << ";max=" << uv.max_steps << ";rec=" << uv.record_every
              << ";keep=" << uv.max_saved_records
              << ";onman=" << uv.init_on_manifold << ";skip=" << csv::fmt(uv.fit_skip_fraction)
              << ";jc=" << join_doubles(uv.joint_c_grid) << ";jr=" << uv.joint_refine;
            break;
        case ExperimentKind::matrix_sensing:
            o << ";d=" << sensing.d << ";r=" << sensing.r << ";P=" << sensing.samples << ";ds=" << sensing.dataset_seed
              << ";eta=" << csv::fmt(sensing.eta) << ";eps2=" << csv::fmt(sensing.epsilon_sq)
              << ";betas=" << join_doubles(sensing.betas) << ";steps=" << sensing.steps
              << ";rec=" << sensing.record_every << ";win=" << csv::fmt(sensing.final_window);
            break;
        case ExperimentKind::beta_star_protocol: {
            const BetaStarSettings& b = beta_star;
            o << ";din=" << b.input_dim << ";h=" << b.hidden << ";P=" << b.samples << ";Pt=" << b.test_samples
              << ";th=" << b.teacher_hidden << ";ds=" << b.dataset_seed << ";p=" << csv::fmt(b.flip_probability)
              << ";etas=" << join_doubles(b.etas) << ";omb=" << join_doubles(b.one_minus_beta)
              << ";steps=" << b.steps << ";b1=" << csv::fmt(b.phase1_beta) << ";tol=" << csv::fmt(b.interpolation_tol)
              << ";pmax=" << b.projection_max_steps << ";metric=" << b.metric;
            break;
        }
        case ExperimentKind::drift_compare: {
            const DriftSettings& d = drift;
            o << ";n=" << d.width << ";P=" << d.samples << ";ds=" << d.dataset_seed << ";is=" << d.init_seed
              << ";eta=" << csv::fmt(d.eta) << ";g=" << csv::fmt(d.gamma) << ";C=" << csv::fmt(d.C)
              << ";eps=" << csv::fmt(d.epsilon) << ";seg=" << d.segments << ";len=" << d.segment_steps
              << ";burn=" << d.burn_in << ";setas=" << join_doubles(d.scaling_etas);
            break;
        }
        case ExperimentKind::spectral_report: {
            const SpectralSettings& s = spectral;
            o << ";n=" << s.width << ";P=" << s.samples << ";ds=" << s.dataset_seed << ";is=" << s.init_seed
              << ";eta=" << csv::fmt(s.eta) << ";g=" << csv::fmt(s.gamma) << ";C=" << csv::fmt(s.C);
            break;
        }
    }
    return o.str();
}

inline void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (seeds.empty()) fail("at least one seed is required");
    if (parallelism < 1) fail("parallelism must be >= 1");
    switch (kind) {
        case ExperimentKind::uv_timescale:
            if (uv.width < 1 || uv.samples < 1) fail("uv.width and uv.samples must be positive");
            if (!(uv.epsilon >= 0) || !(uv.C > 0)) fail("uv.epsilon must be >= 0 and uv.C > 0");
            for (double g : uv.gammas)
                if (!(g >= 0 && g <= 1)) fail("uv.gammas must lie in [0, 1]");
            for (double e : uv.etas)
                if (!(e > 0)) fail("uv.etas must be positive");
            if (uv.record_every < 1 || uv.max_steps < 1) fail("uv.record_every and uv.max_steps must be positive");
            if (uv.max_saved_records < 20) fail("uv.max_saved_records must be at least 20");
            if (!(uv.fit_skip_fraction >= 0 && uv.fit_skip_fraction < 1)) fail("uv.fit_skip_fraction must lie in [0, 1)");
            break;
        case ExperimentKind::matrix_sensing:
            if (sensing.d < 1 || sensing.r < 1 || sensing.r > sensing.d || sensing.samples < 1)
                fail("sensing sizes must satisfy 1 <= r <= d and P >= 1");
            if (!(sensing.eta > 0) || !(sensing.epsilon_sq >= 0)) fail("sensing.eta > 0 and sensing.epsilon_sq >= 0 required");
            for (double b : sensing.betas)
                if (!(b >= 0 && b < 1)) fail("sensing.betas must lie in [0, 1)");
            if (sensing.steps < 1 || sensing.record_every < 1) fail("sensing.steps and sensing.record_every must be positive");
            if (!(sensing.final_window > 0 && sensing.final_window <= 1)) fail("sensing.final_window must lie in (0, 1]");
            break;
        case ExperimentKind::beta_star_protocol:
            if (beta_star.etas.size() < 3) fail("beta_star.etas needs at least 3 values for the power-law fit");
            if (beta_star.one_minus_beta.size() < 5) fail("beta_star.one_minus_beta needs at least 5 values");
            for (double x : beta_star.one_minus_beta)
                if (!(x > 0 && x <= 1)) fail("beta_star.one_minus_beta entries must lie in (0, 1]");
            if (!(beta_star.flip_probability >= 0 && beta_star.flip_probability < 0.5))
                fail("beta_star.flip_probability must lie in [0, 0.5)");
            if (beta_star.metric != "test_accuracy" && beta_star.metric != "neg_test_loss" &&
                beta_star.metric != "neg_trace_hessian")
                fail("beta_star.metric must be test_accuracy, neg_test_loss or neg_trace_hessian");
            break;
        case ExperimentKind::drift_compare:
            if (drift.burn_in >= drift.segment_steps) fail("drift.burn_in must be below drift.segment_steps");
            if (drift.segments < 1) fail("drift.segments must be positive");
            break;
        case ExperimentKind::spectral_report:
            break;
    }
}

inline ExperimentConfig parse_config(const YAML::Node& root, const ExperimentConfig& defaults = {}) {
    using detail::Reader;
    ExperimentConfig c = defaults;
    if (!root || root.IsNull()) return c;
    if (!root.IsMap()) detail::config_fail(root, "config root must be a mapping");
    {
        Reader top(root, "");
        std::string kind;
        top.get("experiment", kind);
        if (!kind.empty()) {
            try {
                c.kind = experiment_kind_from_string(kind);
            } catch (const ConfigError& e) {
                detail::config_fail(top.at("experiment"), e.what());
            }
        }
        top.get("output", c.output_dir);
        top.get("parallelism", c.parallelism);
        top.get("paper_scale", c.paper_scale);
        if (const YAML::Node s = top.child("seeds")) {
            if (!s.IsSequence()) detail::config_fail(s, "'seeds' must be a list");
            c.seeds.clear();
            for (const auto& e : s) {
                try {
                    c.seeds.push_back(e.as<std::uint64_t>());
                } catch (const YAML::Exception&) {
                    detail::config_fail(e, "seeds must be non-negative integers");
                }
            }
        }
        if (const YAML::Node n = top.child("uv")) {
            Reader r(n, "uv");
            UVSettings& u = c.uv;
            r.get("width", u.width);
            r.get("samples", u.samples);
            r.get("activation", u.activation);
            r.get("dataset_seed", u.dataset_seed);
            r.get("init_seed", u.init_seed);
            r.get("epsilon", u.epsilon);
            r.get("C", u.C);
            r.get_list("gammas", u.gammas);
            r.get_grid("etas", u.etas);
            r.get("stop_fraction", u.stop_fraction);
            r.get("max_steps", u.max_steps);
            r.get("record_every", u.record_every);
            r.get("max_saved_records", u.max_saved_records);
            r.get("init_on_manifold", u.init_on_manifold);
            r.get("fit_skip_fraction", u.fit_skip_fraction);
            r.get_list("joint_c_grid", u.joint_c_grid);
            r.get("joint_refine", u.joint_refine);
            r.finish();
            if (u.activation != "linear" && u.activation != "tanh" && u.activation != "relu")
                detail::config_fail(r.at("activation"), "uv.activation must be linear, tanh or relu");
        }
        if (const YAML::Node n = top.child("sensing")) {
            Reader r(n, "sensing");
            SensingSettings& s = c.sensing;
            r.get("d", s.d);
            r.get("r", s.r);
            r.get("samples", s.samples);
            r.get("dataset_seed", s.dataset_seed);
            r.get("eta", s.eta);
            r.get("epsilon_sq", s.epsilon_sq);
            r.get_list("betas", s.betas);
            r.get("steps", s.steps);
            r.get("record_every", s.record_every);
            r.get("final_window", s.final_window);
            r.finish();
        }
        if (const YAML::Node n = top.child("beta_star")) {
            Reader r(n, "beta_star");
            BetaStarSettings& b = c.beta_star;
            r.get("input_dim", b.input_dim);
            r.get("hidden", b.hidden);
            r.get("samples", b.samples);
            r.get("test_samples", b.test_samples);
            r.get("teacher_hidden", b.teacher_hidden);
            r.get("dataset_seed", b.dataset_seed);
            r.get("flip_probability", b.flip_probability);
            r.get_list("etas", b.etas);
            r.get_list("one_minus_beta", b.one_minus_beta);
            r.get("steps", b.steps);
            r.get("phase1_beta", b.phase1_beta);
            r.get("interpolation_tol", b.interpolation_tol);
            r.get("projection_max_steps", b.projection_max_steps);
            r.get("metric", b.metric);
            r.finish();
        }
        if (const YAML::Node n = top.child("drift")) {
            Reader r(n, "drift");
            DriftSettings& d = c.drift;
            r.get("width", d.width);
            r.get("samples", d.samples);
            r.get("dataset_seed", d.dataset_seed);
            r.get("init_seed", d.init_seed);
            r.get("eta", d.eta);
            r.get("gamma", d.gamma);
            r.get("C", d.C);
            r.get("epsilon", d.epsilon);
            r.get("segments", d.segments);
            r.get("segment_steps", d.segment_steps);
            r.get("burn_in", d.burn_in);
            r.get_list("scaling_etas", d.scaling_etas);
            r.finish();
        }
        if (const YAML::Node n = top.child("spectral")) {
            Reader r(n, "spectral");
            SpectralSettings& s = c.spectral;
            r.get("width", s.width);
            r.get("samples", s.samples);
            r.get("dataset_seed", s.dataset_seed);
            r.get("init_seed", s.init_seed);
            r.get("eta", s.eta);
            r.get("gamma", s.gamma);
            r.get("C", s.C);
            r.finish();
        }
        top.finish();
    }
    if (c.paper_scale) c.apply_paper_scale();
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, const ExperimentConfig& defaults = {}) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    return parse_config(root, defaults);
}

inline ExperimentConfig load_config(const std::string& path, const ExperimentConfig& defaults = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), defaults);
}

}  // namespace momlab
