#pragma once

#include "tosgp/error.hpp"
#include "tosgp/io.hpp"
#include "tosgp/pipeline.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace tosgp {

enum class ExportFormat { Table, Vtk };

inline ExportFormat parse_export_format(const std::string& s) {
    if (s == "table" || s == "csv") return ExportFormat::Table;
    if (s == "vtk") return ExportFormat::Vtk;
    throw DataError("unknown export format '" + s + "' (expected table or vtk)");
}

/// Comma-separated table, one row per node:
///   node_id, x0..x{d-1}, [truth], prediction, [abs_error], std
/// The truth and abs_error columns appear only when a truth is given.
inline std::string export_table(const PredictionResult& r, const AttributedGraph& g, const std::optional<Vector>& truth) {
    const Index n = r.signal.size();
    if (g.node_count != n || r.stddev.size() != n || (truth && truth->size() != n))
        throw DataError("export: prediction, graph and truth lengths differ");
    std::string out = "node_id";
    for (Index k = 0; k < g.features.cols(); ++k) out += ",x" + std::to_string(k);
    if (truth) out += ",truth";
    out += ",prediction";
    if (truth) out += ",abs_error";
    out += ",std\n";
    for (Index i = 0; i < n; ++i) {
        out += std::to_string(i);
        for (Index k = 0; k < g.features.cols(); ++k) out += "," + io::format_double(g.features(i, k));
        if (truth) out += "," + io::format_double((*truth)(i));
        out += "," + io::format_double(r.signal(i));
        if (truth) out += "," + io::format_double(std::abs((*truth)(i) - r.signal(i)));
        out += "," + io::format_double(r.stddev(i)) + "\n";
    }
    return out;
}

/// Legacy ASCII VTK unstructured grid: nodes as points (first three feature
/// columns, zero padded), edges as line cells, fields as point data.
inline std::string export_vtk(const PredictionResult& r, const AttributedGraph& g, const std::optional<Vector>& truth) {
    const Index n = r.signal.size();
    if (g.node_count != n || r.stddev.size() != n || (truth && truth->size() != n))
        throw DataError("export: prediction, graph and truth lengths differ");
    std::string out = "# vtk DataFile Version 3.0\ntosgp prediction " + r.field + "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out += "POINTS " + std::to_string(n) + " double\n";
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < 3; ++k) {
            if (k) out += ' ';
            out += io::format_double(k < g.features.cols() ? g.features(i, k) : 0.0);
        }
        out += '\n';
    }
    const auto ne = g.edges.size();
    out += "CELLS " + std::to_string(ne) + " " + std::to_string(3 * ne) + "\n";
    for (auto [u, v] : g.edges) out += "2 " + std::to_string(u) + " " + std::to_string(v) + "\n";
    out += "CELL_TYPES " + std::to_string(ne) + "\n";
    for (std::size_t e = 0; e < ne; ++e) out += "3\n";
    if (n == 0) return out;
    out += "POINT_DATA " + std::to_string(n) + "\n";
    auto scalars = [&](const std::string& name, auto&& value) {
        out += "SCALARS " + name + " double 1\nLOOKUP_TABLE default\n";
        for (Index i = 0; i < n; ++i) out += io::format_double(value(i)) + "\n";
    };
    scalars("prediction", [&](Index i) { return r.signal(i); });
    scalars("std", [&](Index i) { return r.stddev(i); });
    if (truth) {
        scalars("truth", [&](Index i) { return (*truth)(i); });
        scalars("abs_error", [&](Index i) { return std::abs((*truth)(i) - r.signal(i)); });
    }
    return out;
}

inline void export_fields(const std::filesystem::path& path, const PredictionResult& r, const AttributedGraph& g,
                          ExportFormat format, const std::optional<Vector>& truth = std::nullopt) {
    io::write_text(path, format == ExportFormat::Table ? export_table(r, g, truth) : export_vtk(r, g, truth));
}

} // namespace tosgp
