#pragma once

#include "tosgp/error.hpp"
#include "tosgp/graph.hpp"
#include "tosgp/pipeline.hpp"
#include "tosgp/reference.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace tosgp::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("short write to " + path.string());
}

/// Parses JSON, reporting syntax errors as "path:line: message".
inline json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw DataError(origin + ":" + std::to_string(line) + ": " + e.what());
    }
}

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& origin) {
    if (!j.is_object()) throw DataError(origin + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw DataError(origin + ": unknown key '" + key + "'");
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& origin) {
    if (!j.contains(key)) throw DataError(origin + ": missing key '" + std::string(key) + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw DataError(origin + ": bad value for '" + std::string(key) + "': " + e.what());
    }
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Graph files
//
// {"format": "tosgp-graph", "version": 1, "node_count": n, "feature_dim": d,
//  "features": [n*d values, row-major], "edges": [[u, v], ...],
//  "edge_weights": [...] (optional), "meta": {...} (optional)}

inline constexpr int kGraphVersion = 1;

inline json graph_to_json(const AttributedGraph& g, const json& meta = nullptr) {
    json j;
    j["format"] = "tosgp-graph";
    j["version"] = kGraphVersion;
    j["node_count"] = g.node_count;
    j["feature_dim"] = g.feature_dim();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(g.features.size()));
    for (Index i = 0; i < g.features.rows(); ++i)
        for (Index k = 0; k < g.features.cols(); ++k) flat.push_back(g.features(i, k));
    j["features"] = flat;
    json edges = json::array();
    for (auto [u, v] : g.edges) edges.push_back({u, v});
    j["edges"] = edges;
    if (!g.edge_weights.empty()) j["edge_weights"] = g.edge_weights;
    if (!meta.is_null()) j["meta"] = meta;
    return j;
}

inline AttributedGraph graph_from_json(const json& j, const std::string& origin) {
    reject_unknown_keys(j, {"format", "version", "node_count", "feature_dim", "features", "edges", "edge_weights", "meta"},
                        origin);
    if (get_field<std::string>(j, "format", origin) != "tosgp-graph") throw DataError(origin + ": not a graph file");
    if (get_field<int>(j, "version", origin) > kGraphVersion)
        throw VersionError(origin + ": graph format version newer than supported");
    AttributedGraph g;
    g.node_count = get_field<Index>(j, "node_count", origin);
    const auto d = get_field<Index>(j, "feature_dim", origin);
    const auto flat = get_field<std::vector<double>>(j, "features", origin);
    if (g.node_count < 0 || d < 1 || static_cast<Index>(flat.size()) != g.node_count * d)
        throw DataError(origin + ": features must hold node_count * feature_dim values");
    g.features.resize(g.node_count, d);
    for (Index i = 0; i < g.node_count; ++i)
        for (Index k = 0; k < d; ++k) g.features(i, k) = flat[static_cast<std::size_t>(i * d + k)];
    for (const auto& e : get_field<std::vector<std::vector<Index>>>(j, "edges", origin)) {
        if (e.size() != 2) throw DataError(origin + ": each edge must be a [u, v] pair");
        g.edges.emplace_back(e[0], e[1]);
    }
    if (j.contains("edge_weights")) g.edge_weights = get_field<std::vector<double>>(j, "edge_weights", origin);
    return g;
}

inline AttributedGraph read_graph(const fs::path& path) {
    return graph_from_json(parse_json(read_text(path), path.string()), path.string());
}

inline void write_graph(const fs::path& path, const AttributedGraph& g, const json& meta = nullptr) {
    write_text(path, graph_to_json(g, meta).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Signal files: whitespace-separated columns, one row per node; lines
// starting with '#' are comments (the first may name the columns).

inline Matrix read_columns(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(rows.front().size()) + " columns");
        rows.push_back(std::move(row));
    }
    Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
    return m;
}

inline void write_columns(const fs::path& path, const std::vector<std::string>& names, const std::vector<Vector>& cols) {
    std::string out = "#";
    for (const auto& n : names) out += " " + n;
    out += "\n";
    const Index rows = cols.empty() ? 0 : cols.front().size();
    for (Index i = 0; i < rows; ++i) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out += ' ';
            out += format_double(cols[c](i));
        }
        out += '\n';
    }
    write_text(path, out);
}

// ---------------------------------------------------------------------------
// Dataset manifest
//
// {"schema_version": 1, "dataset_id": "...", "fields": ["U", ...],
//  "samples": [{"id": "...", "graph": "path", "signals": "path" | {"U": "path"},
//               "scalars": [...]}]}
// Paths are relative to the manifest. A multi-column signal file holds one
// column per field in manifest order.

inline constexpr int kManifestVersion = 1;

inline Dataset load_dataset(const fs::path& manifest_path, bool require_signals = true) {
    const std::string origin = manifest_path.string();
    const json j = parse_json(read_text(manifest_path), origin);
    reject_unknown_keys(j, {"schema_version", "dataset_id", "fields", "samples"}, origin);
    if (get_field<int>(j, "schema_version", origin) != kManifestVersion)
        throw VersionError(origin + ": unsupported schema version");
    const fs::path base = manifest_path.parent_path();

    Dataset data;
    data.id = get_field<std::string>(j, "dataset_id", origin);
    data.field_names = get_field<std::vector<std::string>>(j, "fields", origin);
    if (data.field_names.empty()) throw DataError(origin + ": at least one field name is required");
    const json& samples = j.at("samples");
    if (!samples.is_array()) throw DataError(origin + ": 'samples' must be an array");

    for (std::size_t idx = 0; idx < samples.size(); ++idx) {
        const json& sj = samples[idx];
        const std::string ctx = origin + ": sample " + std::to_string(idx);
        reject_unknown_keys(sj, {"id", "graph", "signals", "scalars"}, ctx);
        Sample s;
        s.id = sj.contains("id") ? get_field<std::string>(sj, "id", ctx) : std::to_string(idx);
        s.graph = read_graph(base / get_field<std::string>(sj, "graph", ctx));
        if (sj.contains("scalars")) {
            const auto sc = get_field<std::vector<double>>(sj, "scalars", ctx);
            s.scalars = Eigen::Map<const Vector>(sc.data(), static_cast<Index>(sc.size()));
        }
        if (sj.contains("signals")) {
            const json& sig = sj.at("signals");
            if (sig.is_string()) {
                const Matrix cols = read_columns(base / sig.get<std::string>());
                if (cols.cols() != static_cast<Index>(data.field_names.size()))
                    throw DataError("sample " + s.id + ": signal file has " + std::to_string(cols.cols()) +
                                    " columns, expected one per field");
                for (Index c = 0; c < cols.cols(); ++c) s.signals.emplace_back(cols.col(c));
            } else if (sig.is_object()) {
                for (const auto& name : data.field_names) {
                    if (!sig.contains(name)) throw DataError("sample " + s.id + ": missing signal for field " + name);
                    const Matrix cols = read_columns(base / sig.at(name).get<std::string>());
                    if (cols.cols() != 1) throw DataError("sample " + s.id + ": per-field signal file must have one column");
                    s.signals.emplace_back(cols.col(0));
                }
            } else {
                throw DataError(ctx + ": 'signals' must be a path or an object");
            }
            for (const auto& y : s.signals)
                if (y.size() != s.graph.node_count)
                    throw DataError("sample " + s.id + ": signal length " + std::to_string(y.size()) +
                                    " != node count " + std::to_string(s.graph.node_count));
        } else if (require_signals) {
            throw DataError("sample " + s.id + ": missing signals");
        }
        if (auto r = validate_graph(s.graph); !r.ok()) throw DataError("sample " + s.id + ": " + r.summary());
        data.samples.push_back(std::move(s));
    }
    for (const auto& s : data.samples)
        if (s.scalars.size() != data.scalar_count())
            throw DataError("sample " + s.id + ": scalar count differs from the first sample");
    return data;
}

/// Writes a dataset as manifest + one graph file and one signal file per sample.
inline void save_dataset(const fs::path& manifest_path, const Dataset& data) {
    const fs::path base = manifest_path.parent_path();
    json j;
    j["schema_version"] = kManifestVersion;
    j["dataset_id"] = data.id;
    j["fields"] = data.field_names;
    j["samples"] = json::array();
    for (const auto& s : data.samples) {
        const std::string gname = "graphs/" + s.id + ".json";
        write_graph(base / gname, s.graph);
        json sj;
        sj["id"] = s.id;
        sj["graph"] = gname;
        if (!s.signals.empty()) {
            const std::string sname = "signals/" + s.id + ".txt";
            write_columns(base / sname, data.field_names, s.signals);
            sj["signals"] = sname;
        }
        if (s.scalars.size() > 0) sj["scalars"] = std::vector<double>(s.scalars.data(), s.scalars.data() + s.scalars.size());
        j["samples"].push_back(sj);
    }
    write_text(manifest_path, j.dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Reference point clouds use the graph format with no edges.

inline void write_reference(const fs::path& path, const ReferenceMeasure& ref) {
    AttributedGraph g;
    g.node_count = ref.size();
    g.features = ref.measure.support();
    json meta;
    meta["strategy"] = to_string(ref.strategy);
    meta["description"] = ref.description;
    if (ref.source_sample) meta["source_sample"] = *ref.source_sample;
    if (!ref.indices.empty()) meta["indices"] = ref.indices;
    write_graph(path, g, meta);
}

inline Matrix read_points(const fs::path& path) { return read_graph(path).features; }

inline ReferenceMeasure read_reference(const fs::path& path) {
    const json j = parse_json(read_text(path), path.string());
    const AttributedGraph g = graph_from_json(j, path.string());
    ReferenceMeasure ref;
    ref.measure = EmpiricalMeasure(g.features);
    ref.strategy = ReferenceStrategy::Explicit;
    ref.description = "explicit " + path.string();
    if (j.contains("meta") && j["meta"].is_object()) {
        const json& m = j["meta"];
        if (m.contains("strategy")) ref.strategy = parse_reference_strategy(m["strategy"].get<std::string>());
        if (m.contains("description")) ref.description = m["description"].get<std::string>();
        if (m.contains("source_sample")) ref.source_sample = m["source_sample"].get<Index>();
        if (m.contains("indices")) ref.indices = m["indices"].get<std::vector<Index>>();
    }
    return ref;
}

} // namespace tosgp::io
