#include "tosgp/reference.hpp"
#include "tosgp/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace tosgp;

namespace {

Matrix random_points(Rng& rng, Index n, Index d) {
    Matrix m(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < d; ++k) m(i, k) = rng.normal();
    return m;
}

double mmd_double_loop(const Matrix& p, const Matrix& q) {
    auto k = [](const Vector& x, const Vector& y) { return x.norm() + y.norm() - (x - y).norm(); };
    double pp = 0.0, qq = 0.0, pq = 0.0;
    for (Index i = 0; i < p.rows(); ++i)
        for (Index j = 0; j < p.rows(); ++j) pp += k(p.row(i), p.row(j));
    for (Index i = 0; i < q.rows(); ++i)
        for (Index j = 0; j < q.rows(); ++j) qq += k(q.row(i), q.row(j));
    for (Index i = 0; i < p.rows(); ++i)
        for (Index j = 0; j < q.rows(); ++j) pq += k(p.row(i), q.row(j));
    const double n = static_cast<double>(p.rows()), m = static_cast<double>(q.rows());
    return pp / (n * n) + qq / (m * m) - 2.0 * pq / (n * m);
}

Matrix gather(const Matrix& pts, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), pts.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = pts.row(idx[i]);
    return out;
}

// recomputes the full MMD for every candidate at every step
std::vector<Index> brute_force_greedy(const Matrix& pts, Index m) {
    std::vector<Index> chosen;
    for (Index step = 0; step < m; ++step) {
        Index best = -1;
        double best_val = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < pts.rows(); ++j) {
            if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
            auto trial = chosen;
            trial.push_back(j);
            const double v = mmd_double_loop(gather(pts, trial), pts);
            if (v < best_val - 1e-12) {
                best_val = v;
                best = j;
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

} // namespace

TEST(DistanceKernel, Examples) {
    Vector a(2), b(2);
    a << 3, 0;
    b << 0, 4;
    EXPECT_DOUBLE_EQ(distance_kernel(a, b), 2.0);
    EXPECT_DOUBLE_EQ(distance_kernel(a, a), 6.0);
    EXPECT_DOUBLE_EQ(distance_kernel(a, Vector::Zero(2)), 0.0);
}

TEST(Mmd, IdenticalMeasuresGiveZero) {
    Rng rng(1);
    const Matrix p = random_points(rng, 40, 3);
    const double scale = p.rowwise().norm().maxCoeff();
    EXPECT_LE(std::abs(mmd_squared(EmpiricalMeasure(p), EmpiricalMeasure(p))), 1e-12 * scale);
}

TEST(Mmd, SingletonsGiveTwiceDistance) {
    Matrix x(1, 2), y(1, 2);
    x << 1, 2;
    y << -1, 0.5;
    EXPECT_NEAR(mmd_squared(EmpiricalMeasure(x), EmpiricalMeasure(y)), 2.0 * (x - y).norm(), 1e-14);
}

TEST(Mmd, MatchesDoubleLoopAndIsSymmetric) {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix p = random_points(rng, 7, 2), q = random_points(rng, 11, 2);
        const double v = mmd_squared(EmpiricalMeasure(p), EmpiricalMeasure(q));
        EXPECT_NEAR(v, mmd_double_loop(p, q), 1e-12);
        EXPECT_NEAR(v, mmd_squared(EmpiricalMeasure(q), EmpiricalMeasure(p)), 1e-12);
        EXPECT_GE(v, -1e-12);
    }
}

TEST(MmdSubsample, FullSizeIsPermutation) {
    Rng rng(3);
    const Matrix p = random_points(rng, 12, 2);
    const auto s = mmd_subsample(EmpiricalMeasure(p), 12);
    std::vector<Index> sorted = s.indices;
    std::sort(sorted.begin(), sorted.end());
    for (Index i = 0; i < 12; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
    EXPECT_NEAR(s.mmd2.back(), 0.0, 1e-12);
}

TEST(MmdSubsample, MatchesBruteForceGreedy) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix p = random_points(rng, 9, 2);
        for (Index m : {1, 2, 4}) {
            const auto s = mmd_subsample(EmpiricalMeasure(p), m);
            const auto expect = brute_force_greedy(p, m);
            EXPECT_EQ(s.indices, expect);
            ASSERT_EQ(static_cast<Index>(s.mmd2.size()), m);
            for (Index k = 0; k < m; ++k) {
                const std::vector<Index> prefix(expect.begin(), expect.begin() + k + 1);
                EXPECT_NEAR(s.mmd2[static_cast<std::size_t>(k)], mmd_double_loop(gather(p, prefix), p), 1e-10);
            }
        }
    }
}

TEST(MmdSubsample, DistinctIndicesAndJobsAgree) {
    Rng rng(5);
    const Matrix p = random_points(rng, 60, 3);
    const auto a = mmd_subsample(EmpiricalMeasure(p), 25, 1);
    const auto b = mmd_subsample(EmpiricalMeasure(p), 25, 4);
    EXPECT_EQ(a.indices, b.indices);
    EXPECT_EQ(std::set<Index>(a.indices.begin(), a.indices.end()).size(), 25u);
}

TEST(MmdSubsample, TiesGoToSmallestIndex) {
    const Matrix p = Matrix::Zero(4, 2);
    const auto s = mmd_subsample(EmpiricalMeasure(p), 3);
    EXPECT_EQ(s.indices, (std::vector<Index>{0, 1, 2}));
}

TEST(MmdSubsample, InvalidSizesThrow) {
    const EmpiricalMeasure mu(Matrix::Zero(3, 1));
    EXPECT_THROW(mmd_subsample(mu, 0), DataError);
    EXPECT_THROW(mmd_subsample(mu, 4), DataError);
}

TEST(UniformGrid, CountAndEndpoints) {
    const Matrix g = uniform_grid({0.0, 0.0}, {1.0, 2.0}, {32, 32});
    ASSERT_EQ(g.rows(), 1024);
    ASSERT_EQ(g.cols(), 2);
    EXPECT_EQ(g(0, 0), 0.0);
    EXPECT_EQ(g(1, 0), 1.0 / 31.0);
    EXPECT_EQ(g(31, 0), 1.0);
    EXPECT_EQ(g(1023, 1), 2.0);
    EXPECT_THROW(uniform_grid({0.0}, {1.0, 1.0}, {2, 2}), DataError);
    EXPECT_THROW(uniform_grid({0.0}, {1.0}, {0}), DataError);
}

TEST(BuildReference, TrainSubsampleSizes) {
    Rng rng(6);
    std::vector<EmpiricalMeasure> train{EmpiricalMeasure(random_points(rng, 150, 2)),
                                        EmpiricalMeasure(random_points(rng, 120, 2))};
    ReferenceSpec spec;
    spec.sample = 1;
    const auto full = build_reference(spec, train);
    EXPECT_EQ(full.size(), 120);
    EXPECT_EQ(full.source_sample, 1);
    spec.sample = 0;
    spec.size = 100;
    const auto sub = build_reference(spec, train);
    EXPECT_EQ(sub.size(), 100);
    for (Index i = 0; i < 100; ++i)
        EXPECT_EQ(sub.measure.support().row(i), train[0].support().row(sub.indices[static_cast<std::size_t>(i)]));
}

TEST(BuildReference, RepresentativePicksCentralCloud) {
    Rng rng(7);
    std::vector<EmpiricalMeasure> train;
    for (double shift : {-3.0, 0.0, 0.1, 3.0}) {
        Matrix p = random_points(rng, 30, 1) * 0.1;
        p.array() += shift;
        train.emplace_back(p);
    }
    ReferenceSpec spec;
    spec.strategy = ReferenceStrategy::TrainRepresentative;
    spec.n_proj = 5;
    spec.n_quantiles = 50;
    const auto ref = build_reference(spec, train);
    ASSERT_TRUE(ref.source_sample.has_value());
    EXPECT_TRUE(*ref.source_sample == 1 || *ref.source_sample == 2);
}

TEST(BuildReference, ErrorCases) {
    std::vector<EmpiricalMeasure> train{EmpiricalMeasure(Matrix::Zero(5, 2))};
    ReferenceSpec spec;
    spec.sample = 3;
    EXPECT_THROW(build_reference(spec, train), DataError);
    spec.sample = 0;
    spec.size = 6;
    EXPECT_THROW(build_reference(spec, train), DataError);
    ReferenceSpec grid;
    grid.strategy = ReferenceStrategy::UniformGrid;
    grid.lower = {0.0};
    grid.upper = {1.0};
    grid.resolution = {4};
    EXPECT_THROW(build_reference(grid, train), DataError);
    EXPECT_THROW(parse_reference_strategy("nearest"), DataError);
    EXPECT_EQ(parse_reference_strategy("uniform-grid"), ReferenceStrategy::UniformGrid);
}
