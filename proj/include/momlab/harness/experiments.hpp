#pragma once

// The five experiment kinds. Each writes its per-cell artifacts and summary
// CSVs into the configured output directory and returns one RunRecord per
// cell. Summaries are recomputed from the persisted cell CSVs so the `fit`
// and `plot` steps never need to re-run anything.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "momlab/analysis.hpp"
#include "momlab/drift.hpp"
#include "momlab/harness/config.hpp"
#include "momlab/harness/sweep.hpp"
#include "momlab/models/matrix_sensing.hpp"
#include "momlab/models/mlp.hpp"
#include "momlab/models/vector_uv.hpp"
#include "momlab/optimizer.hpp"
#include "momlab/spectral.hpp"

namespace momlab {

enum class RunStatus { completed, diverged, failed };

inline const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::completed: return "completed";
        case RunStatus::diverged: return "diverged";
        case RunStatus::failed: return "failed";
    }
    return "?";
}

struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string cell;
    std::vector<std::string> outputs;                     // files relative to the output directory
    std::vector<std::pair<std::string, double>> results;  // fit results and scalar observables
    double wall_clock_s = 0.0;
    RunStatus status = RunStatus::completed;
    std::string message;
};

struct ExperimentResult {
    std::vector<RunRecord> runs;
    std::vector<std::string> summaries;  // summary files, relative to the output directory

    std::size_t count(RunStatus s) const {
        return static_cast<std::size_t>(
            std::count_if(runs.begin(), runs.end(), [s](const RunRecord& r) { return r.status == s; }));
    }
};

namespace detail {

namespace fs = std::filesystem;

/// Strips characters that would break a CSV cell.
inline std::string csv_safe(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

inline double median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += v[i];
    return to > from ? s / static_cast<double>(to - from) : std::nan("");
}

class Stopwatch {
   public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

   private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Runs `body`, mapping library errors onto run statuses.
template <class F>
void guarded(RunRecord& rec, F&& body) {
    try {
        body();
    } catch (const DivergenceError& e) {
        rec.status = RunStatus::diverged;
        rec.message = e.what();
    } catch (const Error& e) {
        rec.status = RunStatus::failed;
        rec.message = e.what();
    }
}

inline void write_runs_json(const fs::path& dir, const ExperimentConfig& c, const ExperimentResult& r) {
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const RunRecord& rec : r.runs) {
        nlohmann::ordered_json j;
        j["config_hash"] = rec.config_hash;
        j["seed"] = rec.seed;
        j["cell"] = rec.cell;
        j["status"] = to_string(rec.status);
        j["message"] = rec.message;
        j["outputs"] = rec.outputs;
        nlohmann::ordered_json res = nlohmann::ordered_json::object();
        for (const auto& [k, v] : rec.results) res[k] = std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
        j["results"] = res;
        j["wall_clock_s"] = rec.wall_clock_s;
        runs.push_back(j);
    }
    nlohmann::ordered_json doc;
    doc["experiment"] = to_string(c.kind);
    doc["config_hash"] = c.hash();
    doc["config"] = c.canonical();
    doc["runs"] = runs;
    std::ofstream(dir / "runs.json") << doc.dump(2) << '\n';

    // Same records without wall-clock, so this file is reproducible.
    CsvSheet sheet{{"cell", "seed", "status", "config_hash", "message"}, {}};
    for (const RunRecord& rec : r.runs)
        sheet.rows.push_back({csv_safe(rec.cell), std::to_string(rec.seed), to_string(rec.status), rec.config_hash,
                              csv_safe(rec.message)});
    sheet.write((dir / "runs.csv").string());
}

inline fs::path prepare_output(const ExperimentConfig& c) {
    const fs::path dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(dir / "trajectories", ec);
    if (ec) throw FormatError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

inline RunRecord make_record(const ExperimentConfig& c, std::uint64_t seed, const CellKey& key) {
    RunRecord r;
    r.config_hash = c.hash();
    r.seed = seed;
    r.cell = key.str();
    return r;
}

}  // namespace detail

/// Every stride-th record plus the last, with stride chosen so at most
/// `max_rows` remain. Long UV runs are recorded every step (short ones need
/// the resolution) and thinned before fitting and saving.
inline TrajectoryRecord thin_record(const TrajectoryRecord& r, std::size_t max_rows) {
    if (max_rows < 2 || r.size() <= max_rows) return r;
    const std::size_t stride = (r.size() - 1 + max_rows - 2) / (max_rows - 1);
    TrajectoryRecord out;
    out.has_trace_hessian = r.has_trace_hessian;
    out.has_test_error = r.has_test_error;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (i % stride != 0 && i + 1 != r.size()) continue;
        out.step.push_back(r.step[i]);
        out.loss.push_back(r.loss[i]);
        out.weight_norm_sq.push_back(r.weight_norm_sq[i]);
        out.momentum_norm_sq.push_back(r.momentum_norm_sq[i]);
        out.trace_hessian.push_back(r.trace_hessian[i]);
        out.test_error.push_back(r.test_error[i]);
    }
    return out;
}

// ---------------------------------------------------------------- vector UV

inline UVDataset uv_dataset(long samples, std::uint64_t dataset_seed) {
    RandomStream rng(dataset_seed, stable_hash("uv-dataset"));
    return generate_uv_dataset(samples, rng);
}

/// Calls f(model) with the UV network described by (width, activation, dataset).
template <class F>
decltype(auto) with_uv_model(long width, const std::string& activation, const UVDataset& ds, F&& f) {
    if (activation == "linear") return f(VectorUVModel(width, ds));
    Matrix x(ds.size(), 1), y(ds.size(), 1);
    x.col(0) = ds.x;
    y.col(0) = ds.y;
    return f(MLPModel(activation_from_string(activation), {1, width, 1}, x, y));
}

/// Gaussian start, optionally moved onto the zero-loss manifold by plain GD so
/// the measured decay is the slow drift and not the initial fall onto it.
template <LossModel M>
RealVector uv_initial_point(const M& model, std::uint64_t init_seed, bool on_manifold) {
    RandomStream rng(init_seed, stable_hash("uv-init"));
    RealVector w0 = gaussian_stream(rng, model.dim());
    if (!on_manifold) return w0;
    ProjectionOptions po;
    po.beta = 0.0;
    po.margin = 0.25;
    po.max_steps = 2000000;
    return project_to_manifold(model, w0, 1e-14, po).w;
}

struct UVCell {
    double gamma = 0.0;
    double eta = 0.0;
    std::uint64_t seed = 0;
    double beta = std::nan("");
    long steps = 0;
    bool stopped = false;
    double T_c = std::nan("");
    double r_squared = std::nan("");
    std::string trajectory;
    RunRecord record;
};

/// One pass over the (gamma, eta, seed) grid at a given C. Trajectory files
/// are written only when `traj_dir` is set.
inline std::vector<UVCell> uv_sweep(const ExperimentConfig& cfg, double C, const std::optional<std::string>& traj_dir) {
    const UVSettings& s = cfg.uv;
    const UVDataset ds = uv_dataset(s.samples, s.dataset_seed);
    return with_uv_model(s.width, s.activation, ds, [&](const auto& model) {
        const RealVector w0 = uv_initial_point(model, s.init_seed, s.init_on_manifold);
        struct Coord {
            std::size_t gi, ei;
            std::uint64_t seed;
        };
        std::vector<Coord> coords;
        for (std::size_t gi = 0; gi < s.gammas.size(); ++gi)
            for (std::size_t ei = 0; ei < s.etas.size(); ++ei)
                for (std::uint64_t seed : cfg.seeds) coords.push_back({gi, ei, seed});
        return parallel_map<UVCell>(coords.size(), cfg.parallelism, [&](std::size_t i) {
            const Coord& co = coords[i];
            UVCell cell;
            cell.gamma = s.gammas[co.gi];
            cell.eta = s.etas[co.ei];
            cell.seed = co.seed;
            CellKey key{"uv-timescale", {}};
            key.add("gamma", cell.gamma).add("C", C).add("eta", cell.eta);
            cell.record = detail::make_record(cfg, co.seed, key);
            const detail::Stopwatch clock;
            detail::guarded(cell.record, [&] {
                const HyperParams h = HyperParams::scaled(cell.eta, cell.gamma, C, s.epsilon);
                cell.beta = h.beta;
                RandomStream rng = cell_stream(co.seed, key);
                RecordOptions ro;
                ro.record_every = s.record_every;
                ro.trace_hessian = false;
                const auto stop = StopRule::norm_below(s.stop_fraction * static_cast<double>(s.width), s.max_steps);
                const TrajectoryResult r =
                    run_trajectory(model, NoiseMap::gaussian(s.epsilon), h, OptimizerState::at_rest(w0), stop, ro, rng);
                cell.steps = r.final_state.k;
                cell.stopped = r.stopped_by_rule;
                const TrajectoryRecord rec = thin_record(r.record, static_cast<std::size_t>(s.max_saved_records));
                if (traj_dir) {
                    char name[96];
                    std::snprintf(name, sizeof(name), "trajectories/uv_g%zu_e%zu_s%llu.csv", co.gi, co.ei,
                                  static_cast<unsigned long long>(co.seed));
                    cell.trajectory = name;
                    csv::write_file((std::filesystem::path(*traj_dir) / name).string(), rec.to_csv());
                    cell.record.outputs.push_back(name);
                }
                if (!r.stopped_by_rule) cell.record.message = "step budget exhausted before the threshold";
                const std::vector<double> t(rec.step.begin(), rec.step.end());
                const ExpFit f = fit_exponential(t, rec.weight_norm_sq, s.fit_skip_fraction);
                cell.T_c = f.T_c;
                cell.r_squared = f.r_squared;
                cell.record.results = {{"T_c", f.T_c}, {"r_squared", f.r_squared}, {"steps", double(cell.steps)}};
            });
            cell.record.wall_clock_s = clock.seconds();
            return cell;
        });
    });
}

inline const std::vector<std::string>& uv_cells_header() {
    static const std::vector<std::string> h{"gamma", "C",       "eta",     "seed",      "beta",      "status",
                                            "steps", "stopped", "T_c",     "r_squared", "trajectory", "message"};
    return h;
}

inline CsvSheet uv_cells_sheet(const std::vector<UVCell>& cells, double C) {
    CsvSheet sh{uv_cells_header(), {}};
    for (const UVCell& c : cells)
        sh.rows.push_back({csv::fmt(c.gamma), csv::fmt(C), csv::fmt(c.eta), std::to_string(c.seed), csv::fmt(c.beta),
                           to_string(c.record.status), std::to_string(c.steps), c.stopped ? "1" : "0", csv::fmt(c.T_c),
                           csv::fmt(c.r_squared), c.trajectory, detail::csv_safe(c.record.message)});
    return sh;
}

/// Per-gamma (eta, median T_c) from cell rows (gamma, eta, T_c, status).
struct UVAggregate {
    std::vector<GammaSweep> sweeps;
    std::vector<std::vector<double>> median_r2;  // parallel to sweeps[g].points
};

inline UVAggregate uv_aggregate(const std::vector<double>& gamma, const std::vector<double>& eta,
                                const std::vector<double>& tc, const std::vector<double>& r2) {
    std::vector<double> gs = gamma;
    std::sort(gs.begin(), gs.end());
    gs.erase(std::unique(gs.begin(), gs.end()), gs.end());
    UVAggregate out;
    for (double g : gs) {
        std::vector<double> es;
        for (std::size_t i = 0; i < gamma.size(); ++i)
            if (gamma[i] == g) es.push_back(eta[i]);
        std::sort(es.begin(), es.end());
        es.erase(std::unique(es.begin(), es.end()), es.end());
        GammaSweep sw{g, {}};
        std::vector<double> rr;
        for (double e : es) {
            std::vector<double> t, q;
            for (std::size_t i = 0; i < gamma.size(); ++i)
                if (gamma[i] == g && eta[i] == e) {
                    t.push_back(tc[i]);
                    q.push_back(r2[i]);
                }
            const double m = detail::median(t);
            if (std::isfinite(m)) {
                sw.points.emplace_back(e, m);
                rr.push_back(detail::median(q));
            }
        }
        out.sweeps.push_back(sw);
        out.median_r2.push_back(rr);
    }
    return out;
}

inline UVAggregate uv_aggregate(const std::vector<UVCell>& cells) {
    std::vector<double> g, e, t, r;
    for (const UVCell& c : cells) {
        if (c.record.status != RunStatus::completed) continue;
        g.push_back(c.gamma);
        e.push_back(c.eta);
        t.push_back(c.T_c);
        r.push_back(c.r_squared);
    }
    return uv_aggregate(g, e, t, r);
}

inline double theory_alpha(double gamma) { return std::max(2.0 * (1.0 - gamma), gamma); }

/// Rebuilds uv_fits.csv and uv_alpha.csv from a persisted uv_cells.csv.
inline std::vector<std::string> refit_uv(const std::string& dir) {
    const csv::Table t = csv::read_file((std::filesystem::path(dir) / "uv_cells.csv").string());
    const int cg = t.require_column("gamma"), cc = t.require_column("C"), ce = t.require_column("eta");
    const int ct = t.require_column("T_c"), cr = t.require_column("r_squared"), cs = t.require_column("status");
    std::vector<double> g, e, tc, r2;
    double C = std::nan("");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        C = t.number(i, cc);
        if (t.rows[i][static_cast<std::size_t>(cs)] != "completed") continue;
        g.push_back(t.number(i, cg));
        e.push_back(t.number(i, ce));
        tc.push_back(t.number(i, ct));
        r2.push_back(t.number(i, cr));
    }
    const UVAggregate agg = uv_aggregate(g, e, tc, r2);
    CsvSheet fits{{"gamma", "C", "eta", "T_c", "r_squared", "alpha", "T0", "beta_star"}, {}};
    CsvSheet alpha{{"gamma", "alpha", "T0", "residual", "r_squared", "theory_alpha", "points", "message"}, {}};
    for (std::size_t k = 0; k < agg.sweeps.size(); ++k) {
        const GammaSweep& sw = agg.sweeps[k];
        PowerLawFit pf{std::nan(""), std::nan(""), std::nan(""), std::nan("")};
        std::string msg;
        try {
            pf = fit_powerlaw(sw.points);
        } catch (const Error& ex) {
            msg = detail::csv_safe(ex.what());
        }
        for (std::size_t j = 0; j < sw.points.size(); ++j)
            fits.rows.push_back({csv::fmt(sw.gamma), csv::fmt(C), csv::fmt(sw.points[j].first),
                                 csv::fmt(sw.points[j].second), csv::fmt(agg.median_r2[k][j]), csv::fmt(pf.alpha),
                                 csv::fmt(pf.T0), ""});
        alpha.rows.push_back({csv::fmt(sw.gamma), csv::fmt(pf.alpha), csv::fmt(pf.T0), csv::fmt(pf.residual),
                              csv::fmt(pf.r_squared), csv::fmt(theory_alpha(sw.gamma)),
                              std::to_string(sw.points.size()), msg});
    }
    fits.write((std::filesystem::path(dir) / "uv_fits.csv").string());
    alpha.write((std::filesystem::path(dir) / "uv_alpha.csv").string());
    return {"uv_fits.csv", "uv_alpha.csv"};
}

/// joint_fit_C over full UV sweeps (no trajectory files); writes joint_fit_C.csv.
inline JointFitResult uv_joint_fit(const ExperimentConfig& cfg, const std::string& dir) {
    if (cfg.uv.joint_c_grid.empty()) throw ConfigError("uv.joint_c_grid is empty");
    const JointFitResult jf = joint_fit_C(
        [&](double C) { return uv_aggregate(uv_sweep(cfg, C, std::nullopt)).sweeps; }, cfg.uv.joint_c_grid,
        cfg.uv.joint_refine);
    CsvSheet sh{{"C", "spread", "selected", "ambiguous", "warning"}, {}};
    for (const auto& [c, sp] : jf.profile)
        sh.rows.push_back({csv::fmt(c), csv::fmt(sp), c == jf.C ? "1" : "0", jf.ambiguous ? "1" : "0",
                           detail::csv_safe(jf.warning)});
    sh.write((std::filesystem::path(dir) / "joint_fit_C.csv").string());
    return jf;
}

inline ExperimentResult run_uv_timescale(const ExperimentConfig& cfg) {
    const auto dir = detail::prepare_output(cfg);
    const std::vector<UVCell> cells = uv_sweep(cfg, cfg.uv.C, dir.string());
    uv_cells_sheet(cells, cfg.uv.C).write((dir / "uv_cells.csv").string());
    ExperimentResult out;
    for (const UVCell& c : cells) out.runs.push_back(c.record);
    out.summaries = {"uv_cells.csv"};
    for (const std::string& f : refit_uv(dir.string())) out.summaries.push_back(f);
    return out;
}

// ----------------------------------------------------------- matrix sensing

inline SensingDataset sensing_dataset(const SensingSettings& s) {
    RandomStream rng(s.dataset_seed, stable_hash("sensing-dataset"));
    return generate_sensing_dataset(s.d, s.r, s.samples, rng);
}

/// beta* = 1 - C eta^(2/3) with the sensing constant for unit-variance A.
inline double predicted_sensing_beta_star(const SensingSettings& s) {
    const double C = matrix_sensing_C(s.epsilon_sq, 1.0, static_cast<double>(s.d), static_cast<double>(s.samples));
    return 1.0 - C * std::pow(s.eta, 2.0 / 3.0);
}

/// Window statistics of one sensing trajectory.
struct SensingWindows {
    double final_test_error = std::nan("");
    double final_trace = std::nan("");
    double final_loss = std::nan("");
    long phase_start = -1;  // first step at which the loss is within 2x of its final noise floor
    double start_trace = std::nan("");
};

/// "Final" = mean over the last `final_window` fraction of records. The
/// label-noise phase starts once the iterate has fallen onto the manifold,
/// i.e. at the first record whose loss is within 2x of the final median loss;
/// Tr H is compared between that record and the final window.
inline SensingWindows sensing_windows(const TrajectoryRecord& r, double final_window) {
    SensingWindows w;
    const std::size_t n = r.size();
    if (n == 0) return w;
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(final_window * static_cast<double>(n))));
    w.final_test_error = detail::mean_of(r.test_error, n - k, n);
    w.final_trace = detail::mean_of(r.trace_hessian, n - k, n);
    w.final_loss = detail::median(std::vector<double>(r.loss.end() - static_cast<long>(k), r.loss.end()));
    for (std::size_t i = 0; i < n; ++i)
        if (r.loss[i] <= 2.0 * w.final_loss) {
            w.phase_start = r.step[i];
            w.start_trace = r.trace_hessian[i];
            break;
        }
    return w;
}

inline ExperimentResult run_matrix_sensing(const ExperimentConfig& cfg) {
    const SensingSettings& s = cfg.sensing;
    const auto dir = detail::prepare_output(cfg);
    const MatrixSensingModel model(sensing_dataset(s));
    const double eps = std::sqrt(s.epsilon_sq);

    struct Cell {
        double beta = 0.0;
        std::uint64_t seed = 0;
        SensingWindows win;
        TrajectoryRecord rec;
        std::string trajectory;
        RunRecord record;
    };
    struct Coord {
        std::size_t bi;
        std::uint64_t seed;
    };
    std::vector<Coord> coords;
    for (std::size_t bi = 0; bi < s.betas.size(); ++bi)
        for (std::uint64_t seed : cfg.seeds) coords.push_back({bi, seed});

    const auto cells = parallel_map<Cell>(coords.size(), cfg.parallelism, [&](std::size_t i) {
        Cell c;
        c.beta = s.betas[coords[i].bi];
        c.seed = coords[i].seed;
        CellKey key{"matrix-sensing", {}};
        key.add("beta", c.beta).add("eta", s.eta);
        c.record = detail::make_record(cfg, c.seed, key);
        const detail::Stopwatch clock;
        detail::guarded(c.record, [&] {
            const HyperParams h = HyperParams::explicit_beta(s.eta, c.beta, eps);
            RandomStream rng = cell_stream(c.seed, key);
            RecordOptions ro;
            ro.record_every = s.record_every;
            const TrajectoryResult r = run_trajectory(model, NoiseMap::gaussian(eps), h,
                                                      OptimizerState::at_rest(model.identity_init()),
                                                      StopRule::steps(s.steps), ro, rng);
            char name[96];
            std::snprintf(name, sizeof(name), "trajectories/ms_b%zu_s%llu.csv", coords[i].bi,
                          static_cast<unsigned long long>(c.seed));
            c.trajectory = name;
            csv::write_file((dir / name).string(), r.record.to_csv());
            c.record.outputs.push_back(name);
            c.rec = r.record;
            c.win = sensing_windows(r.record, s.final_window);
            c.record.results = {{"final_test_error", c.win.final_test_error},
                                {"final_trace_hessian", c.win.final_trace},
                                {"phase_start_step", double(c.win.phase_start)},
                                {"phase_start_trace_hessian", c.win.start_trace}};
        });
        c.record.wall_clock_s = clock.seconds();
        return c;
    });

    CsvSheet cells_sheet{{"beta", "seed", "status", "final_test_error", "final_trace_hessian", "phase_start_step",
                          "phase_start_trace_hessian", "trace_decreased", "trajectory", "message"},
                         {}};
    CsvSheet curves{{"beta", "seed", "step", "test_error", "trace_hessian"}, {}};
    ExperimentResult out;
    for (const Cell& c : cells) {
        const bool ok = c.record.status == RunStatus::completed;
        cells_sheet.rows.push_back({csv::fmt(c.beta), std::to_string(c.seed), to_string(c.record.status),
                                    csv::fmt(c.win.final_test_error), csv::fmt(c.win.final_trace),
                                    std::to_string(c.win.phase_start), csv::fmt(c.win.start_trace),
                                    ok ? (c.win.final_trace < c.win.start_trace ? "1" : "0") : "",
                                    c.trajectory, detail::csv_safe(c.record.message)});
        for (std::size_t k = 0; k < c.rec.size(); ++k)
            curves.rows.push_back({csv::fmt(c.beta), std::to_string(c.seed), std::to_string(c.rec.step[k]),
                                   csv::fmt(c.rec.test_error[k]), csv::fmt(c.rec.trace_hessian[k])});
        out.runs.push_back(c.record);
    }
    cells_sheet.write((dir / "ms_cells.csv").string());
    curves.write((dir / "ms_curves.csv").string());

    // Medians across seeds, then the interior-minimum test on both observables.
    CsvSheet summary{{"beta", "final_test_error", "final_trace_hessian", "trace_decreased", "completed_seeds"}, {}};
    std::vector<double> bs, te, tr;
    for (double b : s.betas) {
        std::vector<double> e, t;
        bool decreased = true;
        for (const Cell& c : cells)
            if (c.beta == b && c.record.status == RunStatus::completed) {
                e.push_back(c.win.final_test_error);
                t.push_back(c.win.final_trace);
                decreased = decreased && c.win.final_trace < c.win.start_trace;
            }
        if (e.empty()) {
            summary.rows.push_back({csv::fmt(b), "nan", "nan", "", "0"});
            continue;
        }
        bs.push_back(b);
        te.push_back(detail::median(e));
        tr.push_back(detail::median(t));
        summary.rows.push_back(
            {csv::fmt(b), csv::fmt(te.back()), csv::fmt(tr.back()), decreased ? "1" : "0", std::to_string(e.size())});
    }
    summary.write((dir / "ms_summary.csv").string());

    auto argmin = [](const std::vector<double>& v) {
        return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
    };
    CsvSheet star{{"observable", "beta_star", "interior", "predicted_beta_star"}, {}};
    const double pred = predicted_sensing_beta_star(s);
    if (!bs.empty()) {
        const std::size_t ie = argmin(te), it = argmin(tr);
        star.rows.push_back({"test_error", csv::fmt(bs[ie]), (ie > 0 && ie + 1 < bs.size()) ? "1" : "0", csv::fmt(pred)});
        star.rows.push_back({"trace_hessian", csv::fmt(bs[it]), (it > 0 && it + 1 < bs.size()) ? "1" : "0", csv::fmt(pred)});
    }
    star.write((dir / "ms_beta_star.csv").string());
    out.summaries = {"ms_cells.csv", "ms_curves.csv", "ms_summary.csv", "ms_beta_star.csv"};
    return out;
}

// ------------------------------------------------------- beta* on small MLP

struct ClassificationData {
    Matrix x_train, y_train, x_test, y_test;
};

/// Gaussian inputs labelled by the sign of a random tanh teacher.
inline ClassificationData teacher_dataset(const BetaStarSettings& s) {
    RandomStream rng(s.dataset_seed, stable_hash("beta-star-dataset"));
    ClassificationData d;
    auto fill = [&](Matrix& m, Index rows) {
        m.resize(rows, s.input_dim);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < s.input_dim; ++j) m(i, j) = rng.normal();
    };
    fill(d.x_train, s.samples);
    fill(d.x_test, s.test_samples);
    const MLPModel teacher(Activation::tanh, {s.input_dim, s.teacher_hidden, 1}, d.x_train,
                           Matrix::Zero(s.samples, 1));
    const RealVector tw = gaussian_stream(rng, teacher.dim());
    auto sign = [](const Matrix& m) { return Matrix(m.unaryExpr([](double v) { return v >= 0 ? 1.0 : -1.0; })); };
    d.y_train = sign(teacher.predict(tw, d.x_train));
    d.y_test = sign(teacher.predict(tw, d.x_test));
    return d;
}

inline MLPModel beta_star_model(const BetaStarSettings& s, const ClassificationData& d) {
    return MLPModel(Activation::tanh, {s.input_dim, s.hidden, s.hidden, 1}, d.x_train, d.y_train);
}

inline ProjectionOptions beta_star_projection(const BetaStarSettings& s) {
    ProjectionOptions po;
    po.beta = s.phase1_beta;
    po.margin = 0.1;
    po.max_steps = s.projection_max_steps;
    return po;
}

struct ClassifierScore {
    double test_accuracy = std::nan("");
    double test_loss = std::nan("");
    double trace_hessian = std::nan("");
};

inline ClassifierScore score_classifier(const MLPModel& m, const RealVector& w, const ClassificationData& d) {
    const Matrix out = m.predict(w, d.x_test);
    ClassifierScore sc;
    double hits = 0.0;
    for (Index i = 0; i < out.rows(); ++i) hits += (out(i, 0) * d.y_test(i, 0) > 0) ? 1.0 : 0.0;
    sc.test_accuracy = hits / static_cast<double>(out.rows());
    sc.test_loss = 0.5 * (out - d.y_test).squaredNorm() / static_cast<double>(out.rows());
    sc.trace_hessian = m.trace_hessian(w);
    return sc;
}

inline double metric_value(const ClassifierScore& s, const std::string& metric) {
    if (metric == "test_accuracy") return s.test_accuracy;
    if (metric == "neg_test_loss") return -s.test_loss;
    if (metric == "neg_trace_hessian") return -s.trace_hessian;
    throw ConfigError("unknown beta_star metric '" + metric + "'");
}

/// Rebuilds bs_fits.csv and bs_summary.csv from a persisted bs_cells.csv.
inline std::vector<std::string> refit_beta_star(const std::string& dir) {
    const csv::Table t = csv::read_file((std::filesystem::path(dir) / "bs_cells.csv").string());
    const int ce = t.require_column("eta"), cb = t.require_column("beta"), cs = t.require_column("seed");
    const int cst = t.require_column("status"), cm = t.require_column("metric");
    struct Key {
        double eta;
        std::string seed;
        bool operator<(const Key& o) const { return eta != o.eta ? eta < o.eta : seed < o.seed; }
    };
    std::map<Key, std::vector<std::pair<double, double>>> groups;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const Key k{t.number(i, ce), t.rows[i][static_cast<std::size_t>(cs)]};
        auto& g = groups[k];
        if (t.rows[i][static_cast<std::size_t>(cst)] == "completed") g.emplace_back(t.number(i, cb), t.number(i, cm));
    }
    CsvSheet fits{{"eta", "seed", "beta_star", "a_max", "a1", "a2", "residual", "at_boundary", "message"}, {}};
    std::map<double, std::vector<double>> stars;
    for (const auto& [k, pts] : groups) {
        try {
            const PiecewiseFit f = fit_piecewise(pts);
            fits.rows.push_back({csv::fmt(k.eta), k.seed, csv::fmt(f.beta_star), csv::fmt(f.a_max), csv::fmt(f.a1),
                                 csv::fmt(f.a2), csv::fmt(f.residual), f.at_boundary ? "1" : "0", ""});
            stars[k.eta].push_back(f.beta_star);
        } catch (const Error& e) {
            fits.rows.push_back({csv::fmt(k.eta), k.seed, "nan", "nan", "nan", "nan", "nan", "", detail::csv_safe(e.what())});
            stars[k.eta];
        }
    }
    std::vector<std::pair<double, double>> law;
    std::vector<std::pair<double, double>> per_eta;
    for (const auto& [eta, v] : stars) {
        const double b = detail::median(v);
        per_eta.emplace_back(eta, b);
        if (std::isfinite(b) && b < 1.0) law.emplace_back(eta, 1.0 - b);
    }
    double exponent = std::nan(""), prefactor = std::nan("");
    std::string msg;
    try {
        const PowerLawFit pf = fit_powerlaw(law);
        exponent = -pf.alpha;  // 1 - beta* = prefactor * eta^exponent
        prefactor = pf.T0;
    } catch (const Error& e) {
        msg = detail::csv_safe(e.what());
    }
    CsvSheet summary{{"eta", "beta_star", "one_minus_beta_star", "exponent", "prefactor", "message"}, {}};
    for (const auto& [eta, b] : per_eta)
        summary.rows.push_back(
            {csv::fmt(eta), csv::fmt(b), csv::fmt(1.0 - b), csv::fmt(exponent), csv::fmt(prefactor), msg});
    fits.write((std::filesystem::path(dir) / "bs_fits.csv").string());
    summary.write((std::filesystem::path(dir) / "bs_summary.csv").string());
    return {"bs_fits.csv", "bs_summary.csv"};
}

/// Three phases: noiseless descent onto the manifold, noisy SGDM for a fixed
/// budget at each (eta, beta), projection back onto the manifold. The score of
/// the projected point is fitted with a kink in beta for every (eta, seed).
inline ExperimentResult run_beta_star(const ExperimentConfig& cfg) {
    const BetaStarSettings& s = cfg.beta_star;
    const auto dir = detail::prepare_output(cfg);
    const ClassificationData data = teacher_dataset(s);
    const MLPModel model = beta_star_model(s, data);
    const ProjectionOptions po = beta_star_projection(s);
    ExperimentResult out;

    // Phase 1, once per seed.
    struct Start {
        std::optional<RealVector> w;
        RunRecord record;
    };
    const auto starts = parallel_map<Start>(cfg.seeds.size(), cfg.parallelism, [&](std::size_t i) {
        Start st;
        CellKey key{"beta-star-phase1", {}};
        st.record = detail::make_record(cfg, cfg.seeds[i], key);
        const detail::Stopwatch clock;
        detail::guarded(st.record, [&] {
            RandomStream rng = cell_stream(cfg.seeds[i], key);
            const RealVector w0 = gaussian_stream(rng, model.dim());
            const ProjectionResult pr = project_to_manifold(model, w0, s.interpolation_tol, po);
            st.w = pr.w;
            st.record.results = {{"steps", double(pr.steps)}, {"loss", model.loss(pr.w)}};
        });
        st.record.wall_clock_s = clock.seconds();
        return st;
    });
    for (const Start& st : starts) out.runs.push_back(st.record);

    struct Coord {
        double eta, beta;
        std::size_t si;
    };
    std::vector<Coord> coords;
    for (double eta : s.etas)
        for (double omb : s.one_minus_beta)
            for (std::size_t si = 0; si < cfg.seeds.size(); ++si) coords.push_back({eta, 1.0 - omb, si});

    struct Cell {
        ClassifierScore score;
        RunRecord record;
    };
    const NoiseMap noise = NoiseMap::flip(s.flip_probability);
    const auto cells = parallel_map<Cell>(coords.size(), cfg.parallelism, [&](std::size_t i) {
        const Coord& co = coords[i];
        const std::uint64_t seed = cfg.seeds[co.si];
        Cell c;
        CellKey key{"beta-star-protocol", {}};
        key.add("eta", co.eta).add("beta", co.beta);
        c.record = detail::make_record(cfg, seed, key);
        const detail::Stopwatch clock;
        if (!starts[co.si].w) {
            c.record.status = RunStatus::failed;
            c.record.message = "phase 1 failed for this seed";
            return c;
        }
        detail::guarded(c.record, [&] {
            const HyperParams h = HyperParams::explicit_beta(co.eta, co.beta, 1.0);
            RandomStream rng = cell_stream(seed, key);
            RecordOptions ro;
            ro.record_every = s.steps;
            ro.trace_hessian = false;
            const TrajectoryResult r = run_trajectory(model, noise, h, OptimizerState::at_rest(*starts[co.si].w),
                                                      StopRule::steps(s.steps), ro, rng);
            ProjectionResult pr;
            try {
                pr = project_to_manifold(model, r.final_state.w, s.interpolation_tol, po);
            } catch (const ProjectionFailure& e) {
                // The noisy phase left the basin it started in; past the kink this is the expected outcome.
                throw DivergenceError(std::string("no return to the manifold after the noisy phase: ") + e.what(),
                                      r.final_state);
            }
            c.score = score_classifier(model, pr.w, data);
            c.record.results = {{"test_accuracy", c.score.test_accuracy},
                                {"test_loss", c.score.test_loss},
                                {"trace_hessian", c.score.trace_hessian},
                                {"projection_steps", double(pr.steps)}};
        });
        c.record.wall_clock_s = clock.seconds();
        return c;
    });

    CsvSheet sheet{{"eta", "beta", "seed", "status", "test_accuracy", "test_loss", "trace_hessian", "metric", "message"},
                   {}};
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& c = cells[i];
        const bool ok = c.record.status == RunStatus::completed;
        sheet.rows.push_back({csv::fmt(coords[i].eta), csv::fmt(coords[i].beta), std::to_string(cfg.seeds[coords[i].si]),
                              to_string(c.record.status), csv::fmt(c.score.test_accuracy), csv::fmt(c.score.test_loss),
                              csv::fmt(c.score.trace_hessian), ok ? csv::fmt(metric_value(c.score, s.metric)) : "nan",
                              detail::csv_safe(c.record.message)});
        out.runs.push_back(c.record);
    }
    sheet.write((dir / "bs_cells.csv").string());
    out.summaries = {"bs_cells.csv"};
    for (const std::string& f : refit_beta_star(dir.string())) out.summaries.push_back(f);
    return out;
}

// ------------------------------------------------------------ drift compare

/// Longitudinal velocity of direct SGDM against the label-noise drift, plus
/// the SDE path and the eta scaling of the drift at a fixed manifold point.
inline ExperimentResult run_drift_compare(const ExperimentConfig& cfg) {
    const DriftSettings& s = cfg.drift;
    const auto dir = detail::prepare_output(cfg);
    const UVDataset ds = uv_dataset(s.samples, s.dataset_seed);
    const VectorUVModel model(s.width, ds);
    const RealVector w0 = uv_initial_point(model, s.init_seed, true);
    const HyperParams h = HyperParams::scaled(s.eta, s.gamma, s.C, s.epsilon);
    const double c = model.label_noise_constant();
    const long checkpoints = 10;
    ExperimentResult out;

    // Projection of each step's longitudinal displacement onto the predicted
    // drift, summed over post-burn-in steps of independent segments started
    // at w0: sum <P_L dw, d> / sum |d|^2 estimates the velocity ratio.
    struct Segment {
        double num = 0.0, den = 0.0;
        long steps = 0;
        std::vector<double> wsq;  // |w|^2 at checkpoints
        RunRecord record;
    };
    struct Coord {
        std::uint64_t seed;
        long segment;
    };
    std::vector<Coord> coords;
    for (std::uint64_t seed : cfg.seeds)
        for (long k = 0; k < s.segments; ++k) coords.push_back({seed, k});
    const auto segs = parallel_map<Segment>(coords.size(), cfg.parallelism, [&](std::size_t i) {
        Segment sg;
        CellKey key{"drift-compare", {}};
        key.add("segment", std::to_string(coords[i].segment));
        sg.record = detail::make_record(cfg, coords[i].seed, key);
        const detail::Stopwatch clock;
        detail::guarded(sg.record, [&] {
            RandomStream rng = cell_stream(coords[i].seed, key);
            const NoiseMap noise = NoiseMap::gaussian(s.epsilon);
            OptimizerState st = OptimizerState::at_rest(w0);
            sg.wsq.push_back(st.w.squaredNorm());
            for (long k = 0; k < s.segment_steps; ++k) {
                const OptimizerState nx = sgdm_step(st, model, noise, h, rng);
                if (k >= s.burn_in) {
                    // The iterate sits near, not on, the manifold; the
                    // covariance check is relaxed accordingly.
                    const ManifoldChart chart = chart_at(model, st.w);
                    const RealVector d = label_noise_drift(model, chart, c, s.eta, s.gamma, s.C, s.epsilon, 1.0).drift;
                    const RealVector dw = chart.p_l.matrix() * (nx.w - st.w);
                    sg.num += dw.dot(d);
                    sg.den += d.squaredNorm();
                    ++sg.steps;
                }
                st = nx;
                if ((k + 1) % (s.segment_steps / checkpoints) == 0) sg.wsq.push_back(st.w.squaredNorm());
            }
            sg.record.results = {{"num", sg.num}, {"den", sg.den}};
        });
        sg.record.wall_clock_s = clock.seconds();
        return sg;
    });

    double num = 0.0, den = 0.0;
    long measured = 0;
    CsvSheet seg_sheet{{"seed", "segment", "status", "projection", "drift_sq", "steps"}, {}};
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const Segment& sg = segs[i];
        seg_sheet.rows.push_back({std::to_string(coords[i].seed), std::to_string(coords[i].segment),
                                  to_string(sg.record.status), csv::fmt(sg.num), csv::fmt(sg.den),
                                  std::to_string(sg.steps)});
        out.runs.push_back(sg.record);
        if (sg.record.status != RunStatus::completed) continue;
        num += sg.num;
        den += sg.den;
        measured += sg.steps;
    }
    seg_sheet.write((dir / "drift_segments.csv").string());
    CsvSheet cmp{{"eta", "gamma", "C", "epsilon", "velocity_ratio", "steps_measured", "total_steps"}, {}};
    cmp.rows.push_back({csv::fmt(s.eta), csv::fmt(s.gamma), csv::fmt(s.C), csv::fmt(s.epsilon),
                        csv::fmt(den > 0 ? num / den : std::nan("")), std::to_string(measured),
                        std::to_string(static_cast<long>(coords.size()) * s.segment_steps)});
    cmp.write((dir / "drift_compare.csv").string());

    // SDE on the manifold over the same horizon, one path per seed.
    const long stride = s.segment_steps / checkpoints;
    CsvSheet paths{{"step", "sgdm_weight_norm_sq", "sde_weight_norm_sq"}, {}};
    std::vector<std::vector<double>> sde(cfg.seeds.size());
    const auto sde_paths = parallel_map<std::vector<double>>(cfg.seeds.size(), cfg.parallelism, [&](std::size_t i) {
        CellKey key{"drift-sde", {}};
        RandomStream rng = cell_stream(cfg.seeds[i], key);
        IntegrateOptions io;
        io.dt = static_cast<double>(stride) / 10.0;
        io.record_every = 10;
        std::vector<double> v;
        try {
            const DriftTrajectory tr = integrate_drift(model, w0, s.eta, s.gamma, s.C, s.epsilon,
                                                       static_cast<double>(s.segment_steps), rng, io);
            for (const RealVector& w : tr.w) v.push_back(w.squaredNorm());
        } catch (const Error&) {
        }
        return v;
    });
    for (long j = 0; j <= checkpoints; ++j) {
        std::vector<double> a, b;
        for (const Segment& sg : segs)
            if (sg.record.status == RunStatus::completed && static_cast<std::size_t>(j) < sg.wsq.size())
                a.push_back(sg.wsq[static_cast<std::size_t>(j)]);
        for (const auto& p : sde_paths)
            if (static_cast<std::size_t>(j) < p.size()) b.push_back(p[static_cast<std::size_t>(j)]);
        paths.rows.push_back({std::to_string(j * stride), csv::fmt(detail::mean_of(a, 0, a.size())),
                              csv::fmt(detail::mean_of(b, 0, b.size()))});
    }
    paths.write((dir / "drift_paths.csv").string(), false);

    // Scaling of |drift| with eta at w0.
    const ManifoldChart chart = chart_at(model, w0);
    std::vector<std::pair<double, double>> pts;
    CsvSheet sc{{"eta", "drift_norm", "fitted_exponent", "expected_exponent"}, {}};
    for (double e : s.scaling_etas)
        pts.emplace_back(e, label_noise_drift(model, chart, c, e, s.gamma, s.C, s.epsilon).drift.norm());
    double expo = std::nan("");
    try {
        expo = -fit_powerlaw(pts).alpha;
    } catch (const Error&) {
    }
    for (const auto& [e, n] : pts)
        sc.rows.push_back({csv::fmt(e), csv::fmt(n), csv::fmt(expo), csv::fmt(2.0 - 2.0 * s.gamma)});
    sc.write((dir / "drift_scaling.csv").string());
    out.summaries = {"drift_segments.csv", "drift_compare.csv", "drift_paths.csv", "drift_scaling.csv"};
    return out;
}

// ---------------------------------------------------------- spectral report

inline ExperimentResult run_spectral_report(const ExperimentConfig& cfg) {
    const SpectralSettings& s = cfg.spectral;
    const auto dir = detail::prepare_output(cfg);
    ExperimentResult out;
    CellKey key{"spectral-report", {}};
    key.add("eta", s.eta).add("gamma", s.gamma).add("C", s.C);
    RunRecord rec = detail::make_record(cfg, cfg.seeds.front(), key);
    const detail::Stopwatch clock;
    detail::guarded(rec, [&] {
        const VectorUVModel model(s.width, uv_dataset(s.samples, s.dataset_seed));
        const RealVector w = uv_initial_point(model, s.init_seed, true);
        const double beta = beta_from_scaling(s.eta, s.gamma, s.C);
        const SymEigen eig = sym_eigendecomposition(model.hessian(w));
        const SpectralReport rep = spectral_report(eig.values, s.eta, beta);
        csv::write_file((dir / "spectral_report.csv").string(), rep.to_csv());
        const double c1 = rep.stable ? rep.rho.c1 : std::nan("");
        const Tau1Table t = tau1_prediction(s.gamma, s.eta, s.C, c1);
        CsvSheet tau{{"gamma", "eta", "beta", "slowest_exponent", "drift_exponent", "slowest_rate", "collides"}, {}};
        tau.rows.push_back({csv::fmt(s.gamma), csv::fmt(s.eta), csv::fmt(beta), csv::fmt(t.slowest_exponent),
                            csv::fmt(t.drift_exponent), csv::fmt(t.slowest_rate), t.collides() ? "1" : "0"});
        tau.write((dir / "tau1.csv").string());
        rec.outputs = {"spectral_report.csv", "tau1.csv"};
        rec.results = {{"rho1", rep.rho.rho1}, {"rho2", rep.rho.rho2}, {"beta", beta}};
        if (!rep.stable) rec.message = "unstable modes present";
    });
    rec.wall_clock_s = clock.seconds();
    out.runs.push_back(rec);
    out.summaries = rec.outputs;
    return out;
}

// ------------------------------------------------------------------- driver

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult r;
    switch (cfg.kind) {
        case ExperimentKind::uv_timescale: r = run_uv_timescale(cfg); break;
        case ExperimentKind::matrix_sensing: r = run_matrix_sensing(cfg); break;
        case ExperimentKind::beta_star_protocol: r = run_beta_star(cfg); break;
        case ExperimentKind::drift_compare: r = run_drift_compare(cfg); break;
        case ExperimentKind::spectral_report: r = run_spectral_report(cfg); break;
    }
    detail::write_runs_json(std::filesystem::path(cfg.output_dir), cfg, r);
    return r;
}

}  // namespace momlab
