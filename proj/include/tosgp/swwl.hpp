#pragma once

#include "tosgp/error.hpp"
#include "tosgp/graph.hpp"
#include "tosgp/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace tosgp {

/// Projection directions and quantile grid shared by every graph of a model.
struct SwwlSpec {
    /// s x n_proj, unit columns.
    Matrix directions;
    int n_quantiles = 500;
    std::uint64_t seed = 0;

    [[nodiscard]] int n_proj() const noexcept { return static_cast<int>(directions.cols()); }
    [[nodiscard]] Index input_dim() const noexcept { return directions.rows(); }
    [[nodiscard]] Index embedding_size() const noexcept { return directions.cols() * n_quantiles; }

    friend bool operator==(const SwwlSpec&, const SwwlSpec&) = default;
};

inline SwwlSpec make_swwl_spec(Index input_dim, int n_proj, int n_quantiles, std::uint64_t seed) {
    if (input_dim < 1) throw DataError("swwl: input dimension must be >= 1");
    if (n_proj < 1) throw DataError("swwl: n_proj must be >= 1");
    if (n_quantiles < 2) throw DataError("swwl: n_quantiles must be >= 2");
    SwwlSpec spec;
    spec.n_quantiles = n_quantiles;
    spec.seed = seed;
    spec.directions.resize(input_dim, n_proj);
    Rng rng(seed);
    for (int p = 0; p < n_proj; ++p) {
        double norm = 0.0;
        while (norm < 1e-12) {
            for (Index k = 0; k < input_dim; ++k) spec.directions(k, p) = rng.normal();
            norm = spec.directions.col(p).norm();
        }
        spec.directions.col(p) /= norm;
    }
    return spec;
}

/// Spec with caller-chosen directions (normalized here).
inline SwwlSpec swwl_spec_from_directions(Matrix directions, int n_quantiles) {
    if (directions.cols() < 1 || directions.rows() < 1) throw DataError("swwl: empty direction matrix");
    if (n_quantiles < 2) throw DataError("swwl: n_quantiles must be >= 2");
    for (Index p = 0; p < directions.cols(); ++p) {
        const double norm = directions.col(p).norm();
        if (!(norm > 0.0)) throw DataError("swwl: zero direction");
        directions.col(p) /= norm;
    }
    return SwwlSpec{std::move(directions), n_quantiles, 0};
}

/// Sliced-Wasserstein embedding of a node cloud: for each direction, the
/// projected values' quantiles at levels k/(n_quantiles-1) (linear
/// interpolation of order statistics), scaled by 1/sqrt(n_proj n_quantiles).
/// Squared Euclidean distance between two embeddings then approximates the
/// squared sliced 2-Wasserstein distance between the clouds.
inline Vector swwl_embed(const Matrix& node_features, const SwwlSpec& spec) {
    const Index n = node_features.rows();
    if (n < 1) throw DataError("swwl: empty graph");
    if (node_features.cols() != spec.input_dim())
        throw DataError("swwl: feature dimension " + std::to_string(node_features.cols()) +
                        " does not match spec dimension " + std::to_string(spec.input_dim()));
    const int nq = spec.n_quantiles;
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.n_proj()) * nq);
    Vector out(spec.embedding_size());
    std::vector<double> proj(static_cast<std::size_t>(n));
    for (int p = 0; p < spec.n_proj(); ++p) {
        for (Index u = 0; u < n; ++u) {
            double s = 0.0;
            for (Index k = 0; k < node_features.cols(); ++k) s += node_features(u, k) * spec.directions(k, p);
            proj[static_cast<std::size_t>(u)] = s;
        }
        std::sort(proj.begin(), proj.end());
        for (int q = 0; q < nq; ++q) {
            const double pos = static_cast<double>(q) * static_cast<double>(n - 1) / static_cast<double>(nq - 1);
            auto lo = static_cast<std::size_t>(std::floor(pos));
            lo = std::min(lo, static_cast<std::size_t>(n - 1));
            const std::size_t hi = std::min(lo + 1, static_cast<std::size_t>(n - 1));
            const double frac = pos - static_cast<double>(lo);
            const double v = frac == 0.0 ? proj[lo] : proj[lo] + frac * (proj[hi] - proj[lo]);
            out(static_cast<Index>(p) * nq + q) = scale * v;
        }
    }
    return out;
}

inline Vector swwl_embed(const WlFeatures& wl, const SwwlSpec& spec) { return swwl_embed(wl.values, spec); }

} // namespace tosgp
