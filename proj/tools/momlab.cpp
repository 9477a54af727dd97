// Command-line front end for the experiment harness.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "momlab/harness/config.hpp"
#include "momlab/harness/experiments.hpp"
#include "momlab/harness/plot.hpp"

namespace {

using namespace momlab;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kConfig = 2, kDiverged = 3, kInternal = 4 };

struct Common {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int parallelism = 0;
    bool paper_scale = false;
};

ExperimentConfig resolve(const Common& c, ExperimentKind kind) {
    ExperimentConfig defaults;
    defaults.kind = kind;
    ExperimentConfig cfg = c.config.empty() ? defaults : load_config(c.config, defaults);
    if (cfg.kind != kind)
        throw ConfigError(std::string("config declares experiment '") + to_string(cfg.kind) + "' but the subcommand runs '" +
                          to_string(kind) + "'");
    if (!c.out.empty()) cfg.output_dir = c.out;
    if (c.seed_set) {
        const std::size_t n = cfg.seeds.size();
        cfg.seeds.clear();
        for (std::size_t i = 0; i < n; ++i) cfg.seeds.push_back(c.seed + i);
    }
    if (c.parallelism > 0) cfg.parallelism = c.parallelism;
    if (c.paper_scale) cfg.apply_paper_scale();
    cfg.validate();
    return cfg;
}

int report(const ExperimentResult& r, const ExperimentConfig& cfg) {
    const std::size_t done = r.count(RunStatus::completed), div = r.count(RunStatus::diverged),
                      fail = r.count(RunStatus::failed);
    std::printf("%s: %zu completed, %zu diverged, %zu failed (config %s)\n", to_string(cfg.kind), done, div, fail,
                cfg.hash().c_str());
    for (const std::string& f : r.summaries) std::printf("  %s\n", (fs::path(cfg.output_dir) / f).string().c_str());
    if (fail > 0) return kInternal;
    return div > 0 ? kDiverged : kOk;
}

int run_fit(const Common& c) {
    const std::string dir = c.out.empty() ? "out" : c.out;
    bool any = false;
    if (fs::exists(fs::path(dir) / "uv_cells.csv")) {
        for (const std::string& f : refit_uv(dir)) std::printf("  %s\n", (fs::path(dir) / f).string().c_str());
        any = true;
    }
    if (fs::exists(fs::path(dir) / "bs_cells.csv")) {
        for (const std::string& f : refit_beta_star(dir)) std::printf("  %s\n", (fs::path(dir) / f).string().c_str());
        any = true;
    }
    if (!c.config.empty()) {
        Common cc = c;
        cc.out = dir;
        const ExperimentConfig cfg = resolve(cc, ExperimentKind::uv_timescale);
        if (!cfg.uv.joint_c_grid.empty()) {
            std::filesystem::create_directories(dir);
            const JointFitResult jf = uv_joint_fit(cfg, dir);
            std::printf("joint fit: C = %.6g (log T0 spread %.4g)%s%s\n", jf.C, jf.spread, jf.warning.empty() ? "" : "; ",
                        jf.warning.c_str());
            any = true;
        }
    }
    if (!any) throw FormatError("nothing to fit in '" + dir + "'");
    return kOk;
}

int run_plot(const Common& c, const std::string& kind) {
    const std::string dir = c.out.empty() ? "out" : c.out;
    std::vector<PlotKind> kinds;
    if (kind == "all") {
        for (PlotKind k : {PlotKind::alpha, PlotKind::sensing, PlotKind::beta_star})
            if (fs::exists(fs::path(dir) / plot_source(k))) kinds.push_back(k);
        if (kinds.empty()) throw FormatError("no plottable summary CSV in '" + dir + "'");
    } else {
        kinds.push_back(plot_kind_from_string(kind));
    }
    for (PlotKind k : kinds) {
        const std::string src = (fs::path(dir) / plot_source(k)).string();
        std::string svg = src.substr(0, src.size() - 4) + ".svg";
        emit_plot(src, k, svg);
        std::printf("  %s\n", svg.c_str());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heavy-ball momentum with label noise: experiments and fits"};
    app.require_subcommand(1);
    Common common;
    std::string plot_kind = "all";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "YAML experiment config");
        sub->add_option("--out", common.out, "output directory");
        sub->add_option_function<std::uint64_t>(
            "--seed",
            [&](const std::uint64_t& s) {
                common.seed = s;
                common.seed_set = true;
            },
            "base seed; runs seeds base .. base + count - 1");
        sub->add_option("--parallelism", common.parallelism, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--paper-scale", common.paper_scale, "full-size matrix sensing (d=100, r=5, P=2500)");
    };
    struct Sub {
        const char* name;
        const char* help;
        std::optional<ExperimentKind> kind;
    };
    const Sub subs[] = {
        {"uv-timescale", "timescale exponent sweep on the vector UV model", ExperimentKind::uv_timescale},
        {"matrix-sensing", "momentum sweep on matrix sensing", ExperimentKind::matrix_sensing},
        {"spectral", "spectral report of the linearized dynamics", ExperimentKind::spectral_report},
        {"drift-compare", "direct SGDM against the limiting drift", ExperimentKind::drift_compare},
        {"beta-star", "optimal momentum protocol on a small MLP", ExperimentKind::beta_star_protocol},
        {"fit", "recompute fits from persisted CSVs (and the joint C fit)", std::nullopt},
        {"plot", "render SVG figures from persisted CSVs", std::nullopt},
    };
    std::vector<std::pair<CLI::App*, const Sub*>> handles;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_common(sub);
        if (std::string(s.name) == "plot") sub->add_option("--kind", plot_kind, "alpha, sensing, beta-star or all");
        handles.emplace_back(sub, &s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        for (const auto& [sub, s] : handles) {
            if (!sub->parsed()) continue;
            if (s->kind) {
                const ExperimentConfig cfg = resolve(common, *s->kind);
                return report(run_experiment(cfg), cfg);
            }
            if (std::string(s->name) == "fit") return run_fit(common);
            return run_plot(common, plot_kind);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInternal;
    }
    return kInternal;
}
