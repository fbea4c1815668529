#include "tosgp/graph.hpp"
#include "tosgp/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>

using namespace tosgp;

namespace {

AttributedGraph triangle() {
    AttributedGraph g;
    g.node_count = 3;
    g.edges = {{0, 1}, {1, 2}, {2, 0}};
    g.features.resize(3, 2);
    g.features << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
    return g;
}

AttributedGraph random_graph(Rng& rng, Index n, Index d) {
    AttributedGraph g;
    g.node_count = n;
    g.features.resize(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < d; ++k) g.features(i, k) = rng.normal();
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (rng.uniform() < 0.3) {
                g.edges.emplace_back(i, j);
                g.edge_weights.push_back(rng.uniform(0.1, 2.0));
            }
    return g;
}

bool has_kind(const ValidationReport& r, Violation::Kind k) {
    return std::any_of(r.violations.begin(), r.violations.end(), [&](const Violation& v) { return v.kind == k; });
}

} // namespace

TEST(ValidateGraph, TriangleIsValid) { EXPECT_TRUE(validate_graph(triangle()).ok()); }

TEST(ValidateGraph, EdgeIndexOutOfRange) {
    auto g = triangle();
    g.edges.emplace_back(0, 5);
    const auto r = validate_graph(g);
    ASSERT_FALSE(r.ok());
    EXPECT_TRUE(has_kind(r, Violation::Kind::IndexOutOfRange));
    EXPECT_NE(r.summary().find("index out of range"), std::string::npos);
}

TEST(ValidateGraph, NonFiniteAttribute) {
    auto g = triangle();
    g.features(1, 1) = std::numeric_limits<double>::quiet_NaN();
    const auto r = validate_graph(g);
    EXPECT_TRUE(has_kind(r, Violation::Kind::NonFiniteAttribute));
    EXPECT_NE(r.summary().find("non-finite attribute"), std::string::npos);
}

TEST(ValidateGraph, ReversedEdgeIsDuplicate) {
    auto g = triangle();
    g.edges.emplace_back(1, 0);
    EXPECT_TRUE(has_kind(validate_graph(g), Violation::Kind::DuplicateEdge));
}

TEST(ValidateGraph, RowCountMismatch) {
    auto g = triangle();
    g.node_count = 4;
    EXPECT_TRUE(has_kind(validate_graph(g), Violation::Kind::ShapeMismatch));
}

TEST(ContinuousWl, ZeroIterationsReturnsRawFeatures) {
    const auto g = triangle();
    const auto wl = continuous_wl_embed(g, 0);
    EXPECT_EQ(wl.values, g.features);
}

TEST(ContinuousWl, IsolatedNodeKeepsItsFeature) {
    AttributedGraph g;
    g.node_count = 2;
    g.features.resize(2, 1);
    g.features << 3.5, -1.0;
    const auto wl = continuous_wl_embed(g, 3);
    ASSERT_EQ(wl.values.cols(), 4);
    for (Index h = 0; h < 4; ++h) {
        EXPECT_EQ(wl.values(0, h), 3.5);
        EXPECT_EQ(wl.values(1, h), -1.0);
    }
}

TEST(ContinuousWl, TwoNodePathByHand) {
    // a'(0) = (0 + 1) / 2, a'(1) = (1 + 0) / 2
    AttributedGraph g;
    g.node_count = 2;
    g.edges = {{0, 1}};
    g.features.resize(2, 1);
    g.features << 0.0, 1.0;
    const auto wl = continuous_wl_embed(g, 1);
    EXPECT_DOUBLE_EQ(wl.values(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(wl.values(1, 1), 0.5);
}

TEST(ContinuousWl, ThreeNodeWeightedPathByHand) {
    // path 0 -(1)- 1 -(3)- 2 with features 0, 1, 2
    // a'(0) = (0 + 1) / 2 = 0.5
    // a'(1) = (1 + (1*0 + 3*2) / 4) / 2 = 1.25
    // a'(2) = (2 + 1) / 2 = 1.5
    AttributedGraph g;
    g.node_count = 3;
    g.edges = {{0, 1}, {1, 2}};
    g.edge_weights = {1.0, 3.0};
    g.features.resize(3, 1);
    g.features << 0.0, 1.0, 2.0;
    const auto wl = continuous_wl_embed(g, 1);
    EXPECT_DOUBLE_EQ(wl.values(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(wl.values(1, 1), 1.25);
    EXPECT_DOUBLE_EQ(wl.values(2, 1), 1.5);
}

TEST(ContinuousWl, ShapeAndFirstBlock) {
    Rng rng(3);
    const auto g = random_graph(rng, 12, 3);
    const auto wl = continuous_wl_embed(g, 4);
    EXPECT_EQ(wl.values.rows(), 12);
    EXPECT_EQ(wl.values.cols(), 3 * 5);
    EXPECT_EQ(wl.values.leftCols(3), g.features);
}

TEST(ContinuousWl, RejectsNegativeIterations) { EXPECT_THROW(continuous_wl_embed(triangle(), -1), DataError); }

TEST(ContinuousWl, PermutationEquivarianceIsBitExact) {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const auto g = random_graph(rng, 15, 2);
        std::vector<Index> perm(15);
        std::iota(perm.begin(), perm.end(), 0);
        for (Index i = 14; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
        // node i of g becomes node perm[i] of h
        AttributedGraph h = g;
        for (Index i = 0; i < 15; ++i) h.features.row(perm[static_cast<std::size_t>(i)]) = g.features.row(i);
        for (auto& [u, v] : h.edges) {
            u = perm[static_cast<std::size_t>(u)];
            v = perm[static_cast<std::size_t>(v)];
            std::swap(u, v);
        }
        std::reverse(h.edges.begin(), h.edges.end());
        std::reverse(h.edge_weights.begin(), h.edge_weights.end());
        const auto a = continuous_wl_embed(g, 3).values;
        const auto b = continuous_wl_embed(h, 3).values;
        for (Index i = 0; i < 15; ++i)
            for (Index c = 0; c < a.cols(); ++c) ASSERT_EQ(a(i, c), b(perm[static_cast<std::size_t>(i)], c));
    }
}

TEST(ContinuousWl, LinearInFeatureScale) {
    Rng rng(5);
    const auto g = random_graph(rng, 10, 2);
    auto scaled = g;
    scaled.features *= -2.5;
    const auto a = continuous_wl_embed(g, 3).values;
    const auto b = continuous_wl_embed(scaled, 3).values;
    EXPECT_LE((b - (-2.5) * a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ContinuousWl, StaysInNeighbourhoodConvexHull) {
    Rng rng(9);
    const auto g = random_graph(rng, 20, 2);
    const auto wl = continuous_wl_embed(g, 3).values;
    std::vector<std::vector<Index>> nbrs(20);
    for (auto [u, v] : g.edges) {
        nbrs[static_cast<std::size_t>(u)].push_back(v);
        nbrs[static_cast<std::size_t>(v)].push_back(u);
    }
    for (int h = 0; h < 3; ++h)
        for (Index u = 0; u < 20; ++u)
            for (Index c = 0; c < 2; ++c) {
                double lo = wl(u, h * 2 + c), hi = lo;
                for (Index v : nbrs[static_cast<std::size_t>(u)]) {
                    lo = std::min(lo, wl(v, h * 2 + c));
                    hi = std::max(hi, wl(v, h * 2 + c));
                }
                const double next = wl(u, (h + 1) * 2 + c);
                EXPECT_GE(next, lo - 1e-12);
                EXPECT_LE(next, hi + 1e-12);
            }
}
