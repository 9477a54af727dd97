#include <gtest/gtest.h>

#include "momlab/analysis.hpp"
#include "support.hpp"

using namespace momlab;

TEST(FitLine, ExactAndErrors) {
    const LineFit f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-14);
    EXPECT_THROW(fit_line({1}, {1}), InsufficientData);
    EXPECT_THROW(fit_line({1, 1}, {1, 2}), DomainError);
    EXPECT_THROW(fit_line({1, 2}, {1}), ContractViolation);
}

TEST(FitExponential, RecoversTimescale) {
    std::vector<double> t, v;
    for (int i = 0; i < 200; ++i) {
        t.push_back(i * 10.0);
        v.push_back(3.0 * std::exp(-t.back() / 450.0) + (i < 20 ? 5.0 * std::exp(-t.back() / 5.0) : 0.0));
    }
    const ExpFit f = fit_exponential(t, v, 0.2);
    EXPECT_NEAR(f.T_c, 450.0, 1e-8);
    EXPECT_NEAR(f.amplitude, 3.0, 1e-10);
    EXPECT_EQ(f.points, 160u);
    EXPECT_DOUBLE_EQ(f.t_start, 400.0);
}

TEST(FitExponential, Failures) {
    std::vector<double> t, grow, flat;
    for (int i = 0; i < 30; ++i) {
        t.push_back(i);
        grow.push_back(std::exp(0.1 * i));
        flat.push_back(2.0);
    }
    EXPECT_THROW(fit_exponential(t, grow), UnboundedTimescale);
    EXPECT_THROW(fit_exponential(t, flat), UnboundedTimescale);
    EXPECT_THROW(fit_exponential({1, 2, 3}, {3, 2, 1}), InsufficientData);
    std::vector<double> neg = flat;
    neg[20] = -1.0;
    EXPECT_THROW(fit_exponential(t, neg), DomainError);
    EXPECT_THROW(fit_exponential(t, flat, 1.0), ContractViolation);
}

TEST(FitPowerlaw, ExactRecovery) {
    std::vector<std::pair<double, double>> pts;
    for (double eta : {1e-3, 1e-2, 1e-1}) pts.emplace_back(eta, 7.0 * std::pow(eta, -1.3));
    const PowerLawFit f = fit_powerlaw(pts);
    EXPECT_NEAR(f.alpha, 1.3, 1e-12);
    EXPECT_NEAR(f.T0, 7.0, 1e-10);
    EXPECT_LT(f.residual, 1e-12);
    pts.pop_back();
    EXPECT_THROW(fit_powerlaw(pts), InsufficientData);
    EXPECT_THROW(fit_powerlaw({{1, 1}, {2, 0}, {3, 1}}), DomainError);
}

namespace {

// log T0(gamma; C) = gamma log(C / 0.2): all prefactors agree at C = 0.2.
std::vector<GammaSweep> synthetic_sweeps(double C) {
    std::vector<GammaSweep> out;
    for (double g : {0.3, 0.5, 2.0 / 3.0, 0.8}) {
        GammaSweep s{g, {}};
        for (double eta : {1e-3, 4e-3, 1.6e-2, 6.4e-2})
            s.points.emplace_back(eta, std::exp(g * std::log(C / 0.2)) * std::pow(eta, -std::max(2 * (1 - g), g)));
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST(JointFitC, RecoversPlantedConstant) {
    const JointFitResult r = joint_fit_C(synthetic_sweeps, {0.05, 0.1, 0.15, 0.25, 0.3, 0.4}, 20);
    EXPECT_NEAR(r.C, 0.2, 0.002);
    EXPECT_LT(r.spread, 0.01);
    EXPECT_FALSE(r.ambiguous);
    EXPECT_TRUE(std::is_sorted(r.profile.begin(), r.profile.end()));
}

TEST(JointFitC, EdgeMinimumWarns) {
    const JointFitResult r = joint_fit_C(synthetic_sweeps, {0.3, 0.4, 0.5}, 4);
    EXPECT_NE(r.warning.find("edge"), std::string::npos);
    EXPECT_THROW(joint_fit_C(synthetic_sweeps, {0.1, 0.2}), InsufficientData);
}

TEST(JointFitC, NeedsTwoGammas) {
    auto one = [](double C) { return std::vector<GammaSweep>{synthetic_sweeps(C).front()}; };
    EXPECT_THROW(joint_fit_C(one, {0.1, 0.2, 0.3}), InsufficientData);
}

TEST(FitPiecewise, RecoversPlantedKinkUnderNoise) {
    momlab::RandomStream rng(51);
    int within = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const double planted = 0.85 + 0.1 * rng.uniform();
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i <= 40; ++i) {
            const double b = 0.7 + 0.29 * i / 40.0;
            const double clean = 0.9 + (b <= planted ? 0.3 * (b - planted) : -1.5 * (b - planted));
            pts.emplace_back(b, clean + 1e-3 * rng.normal());
        }
        const PiecewiseFit f = fit_piecewise(pts);
        if (std::abs(f.beta_star - planted) < 0.01) ++within;
        EXPECT_FALSE(f.at_boundary);
    }
    EXPECT_EQ(within, 50);
}

TEST(FitPiecewise, MonotoneDataSitsOnBoundary) {
    std::vector<std::pair<double, double>> pts;
    for (double b : {0.0, 0.5, 0.8, 0.9, 0.95}) pts.emplace_back(b, 1.0 + b);
    const PiecewiseFit f = fit_piecewise(pts);
    EXPECT_TRUE(f.at_boundary);
    EXPECT_LT(f.residual, 1e-20);
    EXPECT_THROW(fit_piecewise({{0, 1}, {1, 2}, {2, 3}}), InsufficientData);
}

TEST(FitPiecewise, ResidualNoWorseThanSingleLine) {
    momlab::RandomStream rng(52);
    std::vector<std::pair<double, double>> pts;
    std::vector<double> x, y;
    for (int i = 0; i < 12; ++i) {
        pts.emplace_back(i / 12.0, rng.normal());
        x.push_back(pts.back().first);
        y.push_back(pts.back().second);
    }
    EXPECT_LE(fit_piecewise(pts).residual, fit_line(x, y).ssr + 1e-12);
}
