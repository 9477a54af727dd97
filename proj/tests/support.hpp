#pragma once

#include <filesystem>
#include <string>

#include "momlab/models/matrix_sensing.hpp"
#include "momlab/models/mlp.hpp"
#include "momlab/models/quadratic.hpp"
#include "momlab/models/vector_uv.hpp"

namespace momlab::testing {

inline SymMatrix random_psd(RandomStream& rng, Index n, Index rank) {
    Matrix g(n, rank);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < rank; ++j) g(i, j) = rng.normal();
    return SymMatrix::symmetrized(g * g.transpose());
}

inline RealVector random_vector(RandomStream& rng, Index n, double scale = 1.0) {
    return scale * gaussian_stream(rng, n);
}

inline VectorUVModel uv_model(Index n = 10, Index samples = 5, std::uint64_t seed = 0) {
    RandomStream rng(seed, 11);
    return VectorUVModel(n, generate_uv_dataset(samples, rng));
}

/// Random point with u.v = 0, i.e. on the zero-loss set of the zero-label UV model.
inline RealVector uv_manifold_point(RandomStream& rng, Index n) {
    RealVector u = gaussian_stream(rng, n);
    RealVector v = gaussian_stream(rng, n);
    v -= (u.dot(v) / u.squaredNorm()) * u;
    RealVector w(2 * n);
    w << u, v;
    return w;
}

inline MatrixSensingModel sensing_model(Index d = 4, Index r = 2, Index samples = 12, std::uint64_t seed = 0) {
    RandomStream rng(seed, 12);
    return MatrixSensingModel(generate_sensing_dataset(d, r, samples, rng));
}

/// U V = X* with U a random invertible matrix.
inline RealVector sensing_manifold_point(const MatrixSensingModel& m, RandomStream& rng) {
    const Index d = m.d();
    Matrix u(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) u(i, j) = rng.normal();
    u += 2.0 * Matrix::Identity(d, d);
    const Matrix v = u.fullPivLu().solve(m.data().x_star);
    return m.pack(u, v);
}

/// A tanh network whose labels are its own outputs at `w_star`, so w_star is on the zero-loss set.
struct RealizableMLP {
    MLPModel model;
    RealVector w_star;
};

inline RealizableMLP realizable_mlp(std::vector<Index> widths, Index samples, std::uint64_t seed,
                                    Activation act = Activation::tanh) {
    RandomStream rng(seed, 13);
    Matrix x(samples, widths.front());
    for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
    MLPModel probe(act, widths, x, Matrix::Zero(samples, widths.back()));
    RealVector w = gaussian_stream(rng, probe.dim());
    Matrix y = probe.predict(w, x);
    return {MLPModel(act, widths, x, y), w};
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("momlab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace momlab::testing
