#pragma once

#include "tosgp/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace tosgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Real values attached to the nodes of one graph.
using NodeSignal = Vector;

/// Undirected weighted graph with a continuous feature row per node.
struct AttributedGraph {
    Index node_count = 0;
    std::vector<std::pair<Index, Index>> edges;
    /// One weight per edge; empty means every edge has weight 1.
    std::vector<double> edge_weights;
    /// node_count x d.
    Matrix features;

    [[nodiscard]] double weight(std::size_t e) const {
        return edge_weights.empty() ? 1.0 : edge_weights[e];
    }
    [[nodiscard]] Index feature_dim() const { return features.cols(); }
};

struct Violation {
    enum class Kind { IndexOutOfRange, DuplicateEdge, NonFiniteAttribute, BadWeight, ShapeMismatch };
    Kind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
    [[nodiscard]] std::string summary() const {
        std::string s;
        for (const auto& v : violations) {
            if (!s.empty()) s += "; ";
            s += v.message;
        }
        return s;
    }
};

inline ValidationReport validate_graph(const AttributedGraph& g) {
    ValidationReport report;
    auto add = [&](Violation::Kind k, std::string msg) { report.violations.push_back({k, std::move(msg)}); };

    if (g.node_count < 1) add(Violation::Kind::ShapeMismatch, "node count must be positive");
    if (g.features.rows() != g.node_count)
        add(Violation::Kind::ShapeMismatch, "feature rows (" + std::to_string(g.features.rows()) +
                                                ") != node count (" + std::to_string(g.node_count) + ")");
    if (!g.edge_weights.empty() && g.edge_weights.size() != g.edges.size())
        add(Violation::Kind::ShapeMismatch, "edge weight count does not match edge count");

    std::set<std::pair<Index, Index>> seen;
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        auto [u, v] = g.edges[e];
        if (u < 0 || v < 0 || u >= g.node_count || v >= g.node_count) {
            add(Violation::Kind::IndexOutOfRange, "edge " + std::to_string(e) + " (" + std::to_string(u) + ", " +
                                                      std::to_string(v) + "): index out of range");
            continue;
        }
        if (!seen.insert(std::minmax(u, v)).second)
            add(Violation::Kind::DuplicateEdge, "edge " + std::to_string(e) + " (" + std::to_string(u) + ", " +
                                                    std::to_string(v) + "): duplicate edge");
        if (e < g.edge_weights.size() && !(std::isfinite(g.edge_weights[e]) && g.edge_weights[e] >= 0.0))
            add(Violation::Kind::BadWeight, "edge " + std::to_string(e) + ": weight must be finite and >= 0");
    }

    for (Index i = 0; i < g.features.rows(); ++i)
        for (Index j = 0; j < g.features.cols(); ++j)
            if (!std::isfinite(g.features(i, j))) {
                add(Violation::Kind::NonFiniteAttribute,
                    "node " + std::to_string(i) + " column " + std::to_string(j) + ": non-finite attribute");
            }
    return report;
}

inline void require_valid(const AttributedGraph& g) {
    if (auto r = validate_graph(g); !r.ok()) throw DataError("invalid graph: " + r.summary());
}

/// Node features lifted by continuous Weisfeiler-Lehman propagation:
/// [a^0 | a^1 | ... | a^H], node_count x d(H+1).
struct WlFeatures {
    Matrix values;
    int iterations = 0;
};

/// Continuous WL lifting. Each step sets
///   a'(u) = 1/2 (a(u) + sum_v w(u,v) a(v) / sum_v w(u,v))
/// over the neighbours of u; nodes without neighbours (or zero total weight)
/// keep their value. Neighbour terms are summed in sorted order so the result
/// does not depend on node numbering, even bitwise.
inline WlFeatures continuous_wl_embed(const AttributedGraph& g, int iterations) {
    if (iterations < 0) throw DataError("WL iteration count must be >= 0");
    require_valid(g);

    const Index n = g.node_count;
    const Index d = g.feature_dim();
    std::vector<std::vector<std::pair<Index, double>>> nbrs(static_cast<std::size_t>(n));
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        auto [u, v] = g.edges[e];
        const double w = g.weight(e);
        nbrs[static_cast<std::size_t>(u)].emplace_back(v, w);
        if (u != v) nbrs[static_cast<std::size_t>(v)].emplace_back(u, w);
    }

    auto sorted_sum = [](std::vector<double>& terms) {
        std::sort(terms.begin(), terms.end());
        double s = 0.0;
        for (double t : terms) s += t;
        return s;
    };

    std::vector<double> degree(static_cast<std::size_t>(n));
    std::vector<double> terms;
    for (Index u = 0; u < n; ++u) {
        terms.clear();
        for (auto [v, w] : nbrs[static_cast<std::size_t>(u)]) terms.push_back(w);
        degree[static_cast<std::size_t>(u)] = sorted_sum(terms);
    }

    WlFeatures out;
    out.iterations = iterations;
    out.values.resize(n, d * (iterations + 1));
    out.values.leftCols(d) = g.features;
    for (int h = 0; h < iterations; ++h) {
        const auto prev = out.values.middleCols(h * d, d);
        auto next = out.values.middleCols((h + 1) * d, d);
        for (Index u = 0; u < n; ++u) {
            const auto& adj = nbrs[static_cast<std::size_t>(u)];
            const double deg = degree[static_cast<std::size_t>(u)];
            if (adj.empty() || deg <= 0.0) {
                next.row(u) = prev.row(u);
                continue;
            }
            for (Index c = 0; c < d; ++c) {
                terms.clear();
                for (auto [v, w] : adj) terms.push_back(w * prev(v, c));
                next(u, c) = 0.5 * (prev(u, c) + sorted_sum(terms) / deg);
            }
        }
    }
    return out;
}

} // namespace tosgp
