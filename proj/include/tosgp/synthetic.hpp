#pragma once

#include "tosgp/graph.hpp"
#include "tosgp/pipeline.hpp"
#include "tosgp/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace tosgp::synthetic {

/// Random geometric graph on the rectangle [0, width] x [0, height]: uniform
/// nodes, each linked to its k nearest neighbours (symmetrized).
inline AttributedGraph random_geometric_graph(Rng& rng, Index nodes, double width, double height, int k = 6) {
    AttributedGraph g;
    g.node_count = nodes;
    g.features.resize(nodes, 2);
    for (Index i = 0; i < nodes; ++i) {
        g.features(i, 0) = rng.uniform(0.0, width);
        g.features(i, 1) = rng.uniform(0.0, height);
    }
    std::vector<std::pair<Index, Index>> edges;
    std::vector<std::pair<double, Index>> dist;
    for (Index i = 0; i < nodes; ++i) {
        dist.clear();
        for (Index j = 0; j < nodes; ++j)
            if (j != i) dist.emplace_back((g.features.row(i) - g.features.row(j)).squaredNorm(), j);
        const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
        for (std::size_t t = 0; t < kk; ++t) edges.push_back(std::minmax(i, dist[t].second));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    g.edges = std::move(edges);
    return g;
}

/// Parametric plate family. Geometry theta = (width, height), one scalar
/// load s; node signal
///   Y(x, y) = s * (x / width) * (1 + 0.5 sin(pi y / height)) + 0.3 width.
inline double plate_signal(double x, double y, double width, double height, double load) {
    return load * (x / width) * (1.0 + 0.5 * std::sin(std::numbers::pi * y / height)) + 0.3 * width;
}

struct PlateOptions {
    std::size_t samples = 100;
    Index min_nodes = 100;
    Index max_nodes = 200;
    std::uint64_t seed = 1;
};

inline Dataset plate_dataset(const PlateOptions& opts) {
    Rng rng(opts.seed);
    Dataset d;
    d.id = "synthetic-plate";
    d.field_names = {"u"};
    for (std::size_t i = 0; i < opts.samples; ++i) {
        const double width = rng.uniform(0.7, 1.3);
        const double height = rng.uniform(0.7, 1.3);
        const double load = rng.uniform(0.5, 2.0);
        const auto nodes =
            opts.min_nodes + static_cast<Index>(rng.below(static_cast<std::uint64_t>(opts.max_nodes - opts.min_nodes + 1)));
        Sample s;
        s.id = "s" + std::to_string(i);
        s.graph = random_geometric_graph(rng, nodes, width, height);
        Vector y(nodes);
        for (Index u = 0; u < nodes; ++u)
            y(u) = plate_signal(s.graph.features(u, 0), s.graph.features(u, 1), width, height, load);
        s.signals.push_back(std::move(y));
        s.scalars = Vector::Constant(1, load);
        d.samples.push_back(std::move(s));
    }
    return d;
}

} // namespace tosgp::synthetic
