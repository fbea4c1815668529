#pragma once

#include "tosgp/error.hpp"
#include "tosgp/graph.hpp"
#include "tosgp/ot.hpp"
#include "tosgp/parallel.hpp"
#include "tosgp/swwl.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tosgp {

/// Distance-induced kernel k(x, y) = |x| + |y| - |x - y|.
template <typename A, typename B>
inline double distance_kernel(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
    if (x.size() != y.size()) throw DataError("distance kernel: dimension mismatch");
    return x.norm() + y.norm() - (x - y).norm();
}

/// Squared MMD with the distance-induced kernel, V-statistic form:
/// mean k(p, p) + mean k(q, q) - 2 mean k(p, q).
inline double mmd_squared(const EmpiricalMeasure& p, const EmpiricalMeasure& q) {
    if (p.dim() != q.dim()) throw DataError("mmd: dimension mismatch");
    auto mean_kernel = [](const Matrix& a, const Matrix& b) {
        double s = 0.0;
        for (Index i = 0; i < a.rows(); ++i)
            for (Index j = 0; j < b.rows(); ++j) s += distance_kernel(a.row(i), b.row(j));
        return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
    };
    return mean_kernel(p.support(), p.support()) + mean_kernel(q.support(), q.support()) -
           2.0 * mean_kernel(p.support(), q.support());
}

struct Subsample {
    /// Selected indices in selection order.
    std::vector<Index> indices;
    /// MMD^2 between the full measure and each selected prefix.
    std::vector<double> mmd2;

    /// Whether the greedy objective never increased (reported, not enforced).
    [[nodiscard]] bool monotone(double tol = 1e-12) const {
        for (std::size_t i = 1; i < mmd2.size(); ++i)
            if (mmd2[i] > mmd2[i - 1] + tol * std::max(1.0, std::abs(mmd2[i - 1]))) return false;
        return true;
    }
};

/// Greedy MMD subsampling: step i+1 adds the unselected point j minimizing
/// MMD^2(mu, (sum_{l in P} delta_l + delta_j) / (i + 1)). Kernel means over mu
/// and running cross sums with the selection are cached, so the whole run
/// costs O(n^2) kernel evaluations. Ties go to the smallest index.
inline Subsample mmd_subsample(const EmpiricalMeasure& mu, Index target_size, int jobs = 1) {
    const Index n = mu.size();
    if (target_size < 1 || target_size > n)
        throw DataError("mmd subsample: size " + std::to_string(target_size) + " out of range [1, " +
                        std::to_string(n) + "]");
    const Matrix& x = mu.support();
    Vector norms(n);
    for (Index i = 0; i < n; ++i) norms(i) = x.row(i).norm();
    auto k = [&](Index i, Index j) { return norms(i) + norms(j) - (x.row(i) - x.row(j)).norm(); };

    // mean_k(j) = (1/n) sum_u k(x_u, x_j)
    Vector mean_k(n);
    parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t jj) {
        const auto j = static_cast<Index>(jj);
        double s = 0.0;
        for (Index u = 0; u < n; ++u) s += k(u, j);
        mean_k(j) = s / static_cast<double>(n);
    });
    const double self_term = mean_k.mean();

    Subsample out;
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    Vector cross = Vector::Zero(n); // sum over selected l of k(x_l, x_j)
    double sel_sum = 0.0;           // sum over selected pairs
    double sel_mean = 0.0;          // sum over selected l of mean_k(l)

    for (Index step = 0; step < target_size; ++step) {
        const double c = static_cast<double>(step + 1);
        Index best = -1;
        double best_val = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j) {
            if (taken[static_cast<std::size_t>(j)]) continue;
            const double val = (sel_sum + 2.0 * cross(j) + k(j, j)) / (c * c) - 2.0 * (sel_mean + mean_k(j)) / c;
            if (val < best_val) {
                best_val = val;
                best = j;
            }
        }
        taken[static_cast<std::size_t>(best)] = 1;
        out.indices.push_back(best);
        out.mmd2.push_back(self_term + best_val);
        sel_sum += 2.0 * cross(best) + k(best, best);
        sel_mean += mean_k(best);
        for (Index j = 0; j < n; ++j) cross(j) += k(best, j);
    }
    return out;
}

/// Index of the most central graph under the kernel exp(-d^2 / (2 l^2)) on
/// embedding distances, l the median pairwise distance: one greedy MMD step
/// in graph space, i.e. the graph with the largest mean kernel value.
inline Index representative_index(const Matrix& embeddings) {
    const Index n = embeddings.rows();
    if (n < 1) throw DataError("representative: no graphs");
    Matrix d(n, n);
    std::vector<double> pairs;
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) {
            d(i, j) = (embeddings.row(i) - embeddings.row(j)).norm();
            if (i > j && d(i, j) > 0.0) pairs.push_back(d(i, j));
        }
    double len = 1.0;
    if (!pairs.empty()) {
        auto mid = pairs.begin() + static_cast<std::ptrdiff_t>(pairs.size() / 2);
        std::nth_element(pairs.begin(), mid, pairs.end());
        len = *mid;
    }
    Index best = 0;
    double best_val = -1.0;
    for (Index j = 0; j < n; ++j) {
        double s = 0.0;
        for (Index i = 0; i < n; ++i) s += std::exp(-d(i, j) * d(i, j) / (2.0 * len * len));
        if (s > best_val) {
            best_val = s;
            best = j;
        }
    }
    return best;
}

enum class ReferenceStrategy { TrainSubsample, TrainRepresentative, UniformGrid, Explicit };

inline std::string to_string(ReferenceStrategy s) {
    switch (s) {
    case ReferenceStrategy::TrainSubsample: return "train-subsample";
    case ReferenceStrategy::TrainRepresentative: return "train-representative";
    case ReferenceStrategy::UniformGrid: return "uniform-grid";
    case ReferenceStrategy::Explicit: return "explicit";
    }
    return "unknown";
}

inline ReferenceStrategy parse_reference_strategy(const std::string& s) {
    for (auto v : {ReferenceStrategy::TrainSubsample, ReferenceStrategy::TrainRepresentative,
                   ReferenceStrategy::UniformGrid, ReferenceStrategy::Explicit})
        if (to_string(v) == s) return v;
    throw DataError("unknown reference strategy '" + s + "'");
}

struct ReferenceSpec {
    ReferenceStrategy strategy = ReferenceStrategy::TrainSubsample;
    /// Train-subsample: source sample. Size 0 means the full support.
    Index sample = 0;
    Index size = 0;
    /// Uniform grid: per-dimension bounds and point counts.
    std::vector<double> lower, upper;
    std::vector<Index> resolution;
    /// Explicit points (already loaded) and where they came from.
    Matrix points;
    std::string source;
    /// Projections used by the representative selection.
    int n_proj = 50;
    int n_quantiles = 500;
    std::uint64_t seed = 0;
};

struct ReferenceMeasure {
    EmpiricalMeasure measure;
    ReferenceStrategy strategy = ReferenceStrategy::Explicit;
    std::optional<Index> source_sample;
    /// Indices into the source sample's support, when subsampled.
    std::vector<Index> indices;
    std::string description;

    [[nodiscard]] Index size() const noexcept { return measure.size(); }
    [[nodiscard]] Index dim() const noexcept { return measure.dim(); }
};

inline Matrix uniform_grid(const std::vector<double>& lower, const std::vector<double>& upper,
                           const std::vector<Index>& resolution) {
    const std::size_t d = resolution.size();
    if (d == 0 || lower.size() != d || upper.size() != d)
        throw DataError("uniform grid: bounds and resolution must have the same nonzero length");
    Index total = 1;
    for (Index r : resolution) {
        if (r < 1) throw DataError("uniform grid: empty grid");
        total *= r;
    }
    Matrix pts(total, static_cast<Index>(d));
    for (Index p = 0; p < total; ++p) {
        Index rem = p;
        for (std::size_t k = 0; k < d; ++k) {
            const Index r = resolution[k];
            const Index idx = rem % r;
            rem /= r;
            pts(p, static_cast<Index>(k)) =
                r == 1 ? 0.5 * (lower[k] + upper[k])
                       : lower[k] + (upper[k] - lower[k]) * static_cast<double>(idx) / static_cast<double>(r - 1);
        }
    }
    return pts;
}

/// Builds the reference measure from the training measures (WL point clouds).
inline ReferenceMeasure build_reference(const ReferenceSpec& spec, const std::vector<EmpiricalMeasure>& train,
                                        int jobs = 1) {
    ReferenceMeasure ref;
    ref.strategy = spec.strategy;
    auto subsample_from = [&](Index sample) {
        if (sample < 0 || sample >= static_cast<Index>(train.size()))
            throw DataError("reference: sample id " + std::to_string(sample) + " out of range");
        const EmpiricalMeasure& src = train[static_cast<std::size_t>(sample)];
        const Index size = spec.size == 0 ? src.size() : spec.size;
        Subsample sub = mmd_subsample(src, size, jobs);
        Matrix pts(size, src.dim());
        for (Index i = 0; i < size; ++i) pts.row(i) = src.support().row(sub.indices[static_cast<std::size_t>(i)]);
        ref.measure = EmpiricalMeasure(std::move(pts));
        ref.source_sample = sample;
        ref.indices = std::move(sub.indices);
        ref.description = to_string(spec.strategy) + " sample=" + std::to_string(sample) + " size=" + std::to_string(size);
    };

    switch (spec.strategy) {
    case ReferenceStrategy::TrainSubsample:
        subsample_from(spec.sample);
        break;
    case ReferenceStrategy::TrainRepresentative: {
        if (train.empty()) throw DataError("reference: no training measures");
        const SwwlSpec sw = make_swwl_spec(train.front().dim(), spec.n_proj, spec.n_quantiles, spec.seed);
        Matrix emb(static_cast<Index>(train.size()), sw.embedding_size());
        parallel_for(train.size(), jobs, [&](std::size_t i) {
            emb.row(static_cast<Index>(i)) = swwl_embed(train[i].support(), sw).transpose();
        });
        subsample_from(representative_index(emb));
        break;
    }
    case ReferenceStrategy::UniformGrid: {
        ref.measure = EmpiricalMeasure(uniform_grid(spec.lower, spec.upper, spec.resolution));
        std::string res;
        for (Index r : spec.resolution) res += (res.empty() ? "" : "x") + std::to_string(r);
        ref.description = "uniform-grid " + res;
        break;
    }
    case ReferenceStrategy::Explicit:
        ref.measure = EmpiricalMeasure(spec.points);
        ref.description = "explicit " + spec.source;
        break;
    }
    if (!train.empty() && ref.dim() != train.front().dim())
        throw DataError("reference: dimension " + std::to_string(ref.dim()) + " does not match training measures (" +
                        std::to_string(train.front().dim()) + ")");
    return ref;
}

} // namespace tosgp
