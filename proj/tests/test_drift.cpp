#include <gtest/gtest.h>

#include "momlab/analysis.hpp"
#include "momlab/drift.hpp"
#include "support.hpp"

using namespace momlab;
namespace mt = momlab::testing;

namespace {

Matrix random_in_range(RandomStream& rng, const ManifoldChart& c) {
    const Matrix q = c.transverse_basis();
    Matrix a(c.rank, c.rank);
    for (Index i = 0; i < c.rank; ++i)
        for (Index j = 0; j < c.rank; ++j) a(i, j) = rng.normal();
    return q * (a + a.transpose()) * q.transpose();
}

}  // namespace

TEST(Projectors, Complementary) {
    RandomStream rng(31);
    const SymMatrix h = mt::random_psd(rng, 7, 3);
    const ManifoldChart c = tangent_projectors(h);
    EXPECT_EQ(c.rank, 3);
    EXPECT_FALSE(c.degenerate);
    const Matrix& pt = c.p_t.matrix();
    const Matrix& pl = c.p_l.matrix();
    EXPECT_LT(max_abs(pt + pl - Matrix::Identity(7, 7)), 1e-14);
    EXPECT_LT(max_abs(pt * pt - pt), 1e-12);
    EXPECT_LT(max_abs(pl * h.matrix()), 1e-10 * max_abs(h.matrix()));
    EXPECT_LT(max_abs(h.matrix() * c.h_dagger.matrix() - pt), 1e-10);
}

TEST(Projectors, FullRankIsDegenerate) {
    const ManifoldChart c = tangent_projectors(SymMatrix::identity(3));
    EXPECT_TRUE(c.degenerate);
    EXPECT_LT(max_abs(c.p_l.matrix()), 1e-15);
}

TEST(Projectors, AmbiguousRankWarns) {
    RealVector d(3);
    d << 1.0, 1e-8, 0.0;  // second eigenvalue sits on the threshold
    const ManifoldChart c = tangent_projectors(SymMatrix::diagonal(d));
    EXPECT_TRUE(c.rank_ambiguous);
    EXPECT_FALSE(c.warning.empty());
}

TEST(Ltilde, RoundTripOnRangeOfH) {
    RandomStream rng(32);
    for (double gamma : {0.3, 0.5, 0.8}) {
        for (int trial = 0; trial < 10; ++trial) {
            const Index n = 3 + trial;
            const ManifoldChart c = tangent_projectors(mt::random_psd(rng, n, 1 + trial % n));
            const double eta = std::pow(10.0, -3.0 + 2.0 * rng.uniform());
            const double C = 0.1 + rng.uniform();
            const Matrix s = random_in_range(rng, c);
            const Matrix back = ltilde_inverse(c, ltilde_apply(c, s, eta, gamma, C), eta, gamma, C).matrix();
            EXPECT_LT(max_abs(back - s), 1e-10 * std::max(1.0, max_abs(s))) << gamma;
            const Matrix fwd = ltilde_apply(c, ltilde_inverse(c, s, eta, gamma, C).matrix(), eta, gamma, C);
            EXPECT_LT(max_abs(fwd - s), 1e-10 * std::max(1.0, max_abs(s))) << gamma;
        }
    }
}

TEST(Ltilde, InverseOfHIsHalfProjector) {
    RandomStream rng(33);
    const SymMatrix h = mt::random_psd(rng, 6, 4);
    const ManifoldChart c = tangent_projectors(h);
    const Matrix half = ltilde_inverse(h, h.matrix(), 0.01, 0.5, 0.2).matrix();
    EXPECT_LT(max_abs(half - 0.5 * c.p_t.matrix()), 1e-12);
}

TEST(Ltilde, CommutingArgumentIsAnticommutator) {
    RandomStream rng(34);
    const SymMatrix h = mt::random_psd(rng, 5, 5);
    const Matrix s = h.matrix() * h.matrix();
    EXPECT_LT(max_abs(ltilde_apply(h, s, 0.01, 0.8, 0.2) - 2.0 * h.matrix() * s), 1e-9 * max_abs(s));
}

TEST(Ltilde, RejectsMatricesOutsideRange) {
    RandomStream rng(35);
    const SymMatrix h = mt::random_psd(rng, 4, 2);
    EXPECT_THROW(ltilde_apply(h, Matrix::Identity(4, 4), 0.1, 0.5, 0.2), DomainError);
    EXPECT_THROW(ltilde_inverse(h, Matrix::Identity(4, 4), 0.1, 0.5, 0.2), DomainError);
    EXPECT_THROW(ltilde_apply(h, Matrix::Identity(3, 3), 0.1, 0.5, 0.2), ContractViolation);
    EXPECT_THROW(ltilde_coefficient(0.0, 0.5, 0.2), InvalidHyperparameter);
}

TEST(LabelNoiseDrift, MatchesGeneralDriftOnUV) {
    const VectorUVModel m = mt::uv_model();
    RandomStream rng(36);
    for (int k = 0; k < 5; ++k) {
        const RealVector w = mt::uv_manifold_point(rng, 10);
        const ManifoldChart c = chart_at(m, w);
        const Matrix sig = m.noise_factor(w);
        const DriftField gen = limiting_drift(m, c, SymMatrix::symmetrized(sig * sig.transpose()), 0.01, 0.5, 0.2, 0.5);
        const DriftField ln = label_noise_drift(m, c, m.label_noise_constant(), 0.01, 0.5, 0.2, 0.5);
        EXPECT_LT((gen.drift - ln.drift).norm(), 1e-8 * ln.drift.norm());
        EXPECT_LT(gen.ll.norm(), 1e-12 * ln.drift.norm());
        EXPECT_LT((c.p_t.matrix() * ln.drift).norm(), 1e-10 * ln.drift.norm());
    }
}

TEST(LabelNoiseDrift, MatchesGeneralDriftOnSensing) {
    const MatrixSensingModel m = mt::sensing_model(3, 1, 10);
    RandomStream rng(37);
    const RealVector w = mt::sensing_manifold_point(m, rng);
    const ManifoldChart c = chart_at(m, w);
    const Matrix sig = m.noise_factor(w);
    const DriftField gen = limiting_drift(m, c, SymMatrix::symmetrized(sig * sig.transpose()), 0.1, 2.0 / 3.0, 0.3, 1.0);
    const DriftField ln = label_noise_drift(m, c, m.label_noise_constant(), 0.1, 2.0 / 3.0, 0.3, 1.0);
    EXPECT_LT((gen.drift - ln.drift).norm(), 1e-7 * ln.drift.norm());
}

TEST(LabelNoiseDrift, ShrinksUVNormAtPredictedRate) {
    const VectorUVModel m = mt::uv_model();
    RandomStream rng(38);
    const RealVector w = mt::uv_manifold_point(rng, 10);
    const double eta = 0.01, gamma = 0.5, C = 0.2, eps = 0.5;
    const DriftField f = label_noise_drift(m, chart_at(m, w), m.label_noise_constant(), eta, gamma, C, eps);
    // d|w|/dt / |w| for a purely radial drift.
    const double rate = -w.dot(f.drift) / w.squaredNorm();
    EXPECT_NEAR(rate, uv_drift_rate(eta, gamma, C, eps, m.mu2(), 10, 5), 1e-12 * rate);
    EXPECT_DOUBLE_EQ(f.diffusion_factor, eps * (std::pow(eta, 0.5) / C + eta));
}

TEST(LabelNoiseDrift, ScalesAsEtaToTwoMinusTwoGamma) {
    const VectorUVModel m = mt::uv_model();
    RandomStream rng(39);
    const ManifoldChart c = chart_at(m, mt::uv_manifold_point(rng, 10));
    for (double gamma : {0.3, 0.5, 0.8}) {
        std::vector<std::pair<double, double>> pts;
        for (double eta : {1e-3, 3e-3, 1e-2, 3e-2})
            pts.emplace_back(eta, label_noise_drift(m, c, 0.2, eta, gamma, 0.2, 0.5).drift.norm());
        EXPECT_NEAR(-fit_powerlaw(pts).alpha, 2.0 - 2.0 * gamma, 1e-10);
    }
}

TEST(LabelNoiseDrift, DetectsCovarianceMismatch) {
    const VectorUVModel m = mt::uv_model();
    RandomStream rng(40);
    const ManifoldChart c = chart_at(m, mt::uv_manifold_point(rng, 10));
    EXPECT_THROW(label_noise_drift(m, c, 0.5, 0.01, 0.5, 0.2, 0.5), ModelMismatch);
}

TEST(LimitingDrift, DegenerateChartHasNoDrift) {
    const QuadraticModel q = QuadraticModel::isotropic(3, 1.0);
    const ManifoldChart c = chart_at(q, RealVector::Zero(3));
    const DriftField f = limiting_drift(q, c, SymMatrix::identity(3), 0.01, 0.5, 0.2);
    EXPECT_TRUE(f.degenerate);
    EXPECT_EQ(f.drift.norm(), 0.0);
    EXPECT_THROW(limiting_drift(q, c, SymMatrix::diagonal(-RealVector::Ones(3)), 0.01, 0.5, 0.2), DomainError);
}

TEST(Constants, OptimalAndSensingC) {
    EXPECT_NEAR(optimal_C(0.5, 1.0, 5, 10), std::cbrt(0.25 / 50.0), 1e-15);
    EXPECT_NEAR(matrix_sensing_C(0.1, 1.0, 20, 200), std::cbrt(0.2 / 4000.0), 1e-15);
    EXPECT_THROW(optimal_C(0.5, 1.0, 0.0, 10), InvalidHyperparameter);
}

TEST(IntegrateDrift, StaysOnManifoldAndIsReproducible) {
    const VectorUVModel m = mt::uv_model();
    RandomStream init(41);
    const RealVector w0 = mt::uv_manifold_point(init, 10);
    IntegrateOptions opt;
    opt.dt = 50.0;
    opt.record_every = 10;
    auto run = [&](std::uint64_t seed) {
        RandomStream rng(seed);
        return integrate_drift(m, w0, 0.01, 0.5, 0.2, 0.5, 5000.0, rng, opt);
    };
    const DriftTrajectory a = run(1), b = run(1);
    ASSERT_EQ(a.w.size(), 11u);
    for (std::size_t i = 0; i < a.w.size(); ++i) {
        EXPECT_EQ(a.w[i], b.w[i]);
        EXPECT_LT(m.loss(a.w[i]), 1e-9);
    }
    EXPECT_DOUBLE_EQ(a.t.back(), 5000.0);
}

TEST(IntegrateDrift, NoiseFreeIsStationaryAndOffManifoldRejected) {
    const VectorUVModel m = mt::uv_model();
    RandomStream rng(42);
    const RealVector w0 = mt::uv_manifold_point(rng, 10);
    const DriftTrajectory t = integrate_drift(m, w0, 0.01, 0.5, 0.2, 0.0, 10.0, rng);
    for (const RealVector& w : t.w) EXPECT_EQ(w, w0);
    EXPECT_THROW(integrate_drift(m, RealVector::Ones(20), 0.01, 0.5, 0.2, 0.5, 10.0, rng), ContractViolation);
}
