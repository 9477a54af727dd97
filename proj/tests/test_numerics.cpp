#include <gtest/gtest.h>

#include "momlab/numerics.hpp"
#include "support.hpp"

using namespace momlab;

TEST(SymMatrix, RejectsAsymmetricInput) {
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    EXPECT_THROW(SymMatrix{m}, ContractViolation);
    EXPECT_THROW(SymMatrix{Matrix(2, 3)}, ContractViolation);
    const SymMatrix s = SymMatrix::symmetrized(m);
    EXPECT_DOUBLE_EQ(s(0, 1), 2.5);
    EXPECT_DOUBLE_EQ(s(1, 0), 2.5);
}

TEST(SymMatrix, AcceptsRoundoffAsymmetry) {
    Matrix m(2, 2);
    m << 1, 2, 2 + 1e-15, 4;
    const SymMatrix s{m};
    EXPECT_EQ(s(0, 1), s(1, 0));
}

TEST(SymEigen, DescendingAndReconstructs) {
    RandomStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 1 + trial % 9;
        const SymMatrix a = momlab::testing::random_psd(rng, n, n);
        const SymEigen e = sym_eigendecomposition(a);
        for (Index i = 1; i < n; ++i) EXPECT_GE(e.values(i - 1), e.values(i));
        const Matrix back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
        EXPECT_LT(max_abs(back - a.matrix()), 1e-10 * max_abs(a.matrix()));
        EXPECT_LT(max_abs(e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)), 1e-12);
    }
}

TEST(PseudoInverse, PenroseConditionsOnRankDeficient) {
    RandomStream rng(4);
    for (Index rank = 1; rank < 6; ++rank) {
        const SymMatrix a = momlab::testing::random_psd(rng, 6, rank);
        const Matrix p = pseudo_inverse(a).matrix();
        const Matrix& m = a.matrix();
        EXPECT_LT(max_abs(m * p * m - m), 1e-9 * max_abs(m));
        EXPECT_LT(max_abs(p * m * p - p), 1e-9 * max_abs(p));
        EXPECT_EQ(numerical_rank(sym_eigendecomposition(a).values), rank);
    }
}

TEST(PseudoInverse, ZeroMatrixGivesZero) {
    const SymMatrix z = SymMatrix::zero(3);
    EXPECT_EQ(max_abs(pseudo_inverse(z).matrix()), 0.0);
    EXPECT_THROW(pseudo_inverse(z, 0.0), ContractViolation);
}

TEST(FiniteDiff, ExactOnQuadratics) {
    const auto f = [](const RealVector& x) { return 0.5 * x.squaredNorm() + x(0) * x(1); };
    RealVector w(3);
    w << 0.3, -1.2, 2.0;
    const RealVector g = finite_diff_gradient(f, w, 1e-4);
    EXPECT_NEAR(g(0), w(0) + w(1), 1e-9);
    EXPECT_NEAR(g(1), w(1) + w(0), 1e-9);
    EXPECT_NEAR(g(2), w(2), 1e-9);
    EXPECT_THROW(finite_diff_gradient(f, w, 0.0), ContractViolation);
}

TEST(FiniteDiff, NonFiniteValueIsReported) {
    const auto f = [](const RealVector& x) { return x(0) > 0 ? std::log(-1.0) : 0.0; };
    EXPECT_THROW(finite_diff_gradient(f, RealVector::Zero(1), 1e-3), EvaluationFailure);
}

TEST(RandomStream, ReproducibleAndStreamSeparated) {
    RandomStream a(7, 1), b(7, 1), c(7, 2), d(8, 1);
    const RealVector xa = gaussian_stream(a, 64), xb = gaussian_stream(b, 64);
    EXPECT_EQ(xa, xb);
    EXPECT_NE(xa, gaussian_stream(c, 64));
    EXPECT_NE(xa, gaussian_stream(d, 64));
}

TEST(RandomStream, NormalMoments) {
    RandomStream rng(0);
    const RealVector x = gaussian_stream(rng, 200000);
    EXPECT_NEAR(x.mean(), 0.0, 0.01);
    EXPECT_NEAR(x.squaredNorm() / 200000.0, 1.0, 0.01);
}

TEST(RandomStream, UniformInUnitInterval) {
    RandomStream rng(5);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(StableHash, KnownValues) {
    // FNV-1a 64-bit reference values.
    EXPECT_EQ(stable_hash(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(stable_hash("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(stable_hash("foobar"), 0x85944171f73967e8ULL);
}
