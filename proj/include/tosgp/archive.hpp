#pragma once

#include "tosgp/error.hpp"
#include "tosgp/hash.hpp"
#include "tosgp/io.hpp"
#include "tosgp/pipeline.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

namespace tosgp {

/// Current model archive format. Archives with a larger version are refused.
inline constexpr int kArchiveVersion = 1;
inline constexpr const char* kArchiveMagic = "TOSGP-MODEL";

namespace detail {

static_assert(std::endian::native == std::endian::little, "archive blobs assume a little-endian host");

inline constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const unsigned char* data, std::size_t size) {
    std::string out;
    out.reserve((size + 2) / 3 * 4);
    for (std::size_t i = 0; i < size; i += 3) {
        std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16;
        if (i + 1 < size) v |= static_cast<std::uint32_t>(data[i + 1]) << 8;
        if (i + 2 < size) v |= data[i + 2];
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += i + 1 < size ? kB64[(v >> 6) & 63] : '=';
        out += i + 2 < size ? kB64[v & 63] : '=';
    }
    return out;
}

inline std::string base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (s.size() % 4 != 0) throw DataError("archive: malformed base64 blob");
    std::string out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        std::uint32_t v = 0;
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = s[i + static_cast<std::size_t>(k)];
            if (c == '=') {
                ++pad;
                v <<= 6;
                continue;
            }
            const int x = val(c);
            if (x < 0 || pad) throw DataError("archive: malformed base64 blob");
            v = (v << 6) | static_cast<std::uint32_t>(x);
        }
        out += static_cast<char>((v >> 16) & 0xff);
        if (pad < 2) out += static_cast<char>((v >> 8) & 0xff);
        if (pad < 1) out += static_cast<char>(v & 0xff);
    }
    return out;
}

inline io::json blob(const Matrix& m) {
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"base64", base64_encode(reinterpret_cast<const unsigned char*>(m.data()),
                                     static_cast<std::size_t>(m.size()) * sizeof(double))}};
}

inline Matrix unblob(const io::json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const std::string bytes = base64_decode(j.at("base64").get<std::string>());
    if (rows < 0 || cols < 0 || bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double))
        throw DataError("archive: blob size mismatch");
    Matrix m(rows, cols);
    std::memcpy(m.data(), bytes.data(), bytes.size());
    return m;
}

inline Vector unblob_vector(const io::json& j) {
    Matrix m = unblob(j);
    if (m.cols() != 1 && m.size() != 0) throw DataError("archive: expected a column vector");
    return Eigen::Map<Vector>(m.data(), m.size());
}

} // namespace detail

inline io::json model_to_json(const TrainedSurrogate& m) {
    using detail::blob;
    io::json j;
    j["format"] = "tosgp-model";
    j["version"] = kArchiveVersion;
    j["dataset_id"] = m.dataset_id;
    j["lambda"] = m.lambda;
    j["lambda0"] = m.lambda0;
    j["wl_iters"] = m.wl_iters;
    j["sinkhorn"] = {{"tol", m.sinkhorn.tol},
                     {"max_iter", m.sinkhorn.max_iter},
                     {"median_cost_scaling", m.sinkhorn.median_cost_scaling},
                     {"epsilon_scaling", m.sinkhorn.epsilon_scaling},
                     {"scaling_factor", m.sinkhorn.scaling_factor},
                     {"stage_iter", m.sinkhorn.stage_iter},
                     {"newton_after", m.sinkhorn.newton_after}};
    io::json ref;
    ref["strategy"] = to_string(m.reference.strategy);
    ref["description"] = m.reference.description;
    ref["source_sample"] = m.reference.source_sample ? io::json(*m.reference.source_sample) : io::json(nullptr);
    ref["indices"] = m.reference.indices;
    ref["support"] = blob(m.reference.measure.support());
    j["reference"] = ref;
    j["swwl"] = {{"seed", m.swwl.seed}, {"n_quantiles", m.swwl.n_quantiles}, {"directions", blob(m.swwl.directions)}};
    j["train_inputs"] = {{"embeddings", blob(m.train_inputs->embeddings)}, {"scalars", blob(m.train_inputs->scalars)}};
    j["samples"] = io::json::array();
    for (std::size_t i = 0; i < m.sample_ids.size(); ++i)
        j["samples"].push_back({{"id", m.sample_ids[i]}, {"fingerprint", m.fingerprints[i]}});
    j["fields"] = io::json::array();
    for (const auto& f : m.fields) {
        io::json fj;
        fj["name"] = f.name;
        fj["pca"] = {{"mean", blob(f.pca.mean())},
                     {"basis", blob(f.pca.basis())},
                     {"eigenvalues", blob(f.pca.eigenvalues())},
                     {"explained_variance_ratio", blob(f.pca.explained_variance_ratio())}};
        fj["gps"] = io::json::array();
        for (const auto& g : f.gps) {
            const auto& hp = g.hyperparams();
            fj["gps"].push_back({{"signal_variance", hp.signal_variance},
                                 {"graph_lengthscale", hp.graph_lengthscale},
                                 {"scalar_lengthscales", hp.scalar_lengthscales},
                                 {"noise_variance", hp.noise_variance},
                                 {"targets", blob(g.targets())}});
        }
        j["fields"].push_back(fj);
    }
    return j;
}

inline TrainedSurrogate model_from_json(const io::json& j) {
    using detail::unblob;
    using detail::unblob_vector;
    try {
        if (j.at("format").get<std::string>() != "tosgp-model") throw DataError("archive: not a model archive");
        TrainedSurrogate m;
        m.dataset_id = j.at("dataset_id").get<std::string>();
        m.lambda = j.at("lambda").get<double>();
        m.lambda0 = j.at("lambda0").get<double>();
        m.wl_iters = j.at("wl_iters").get<int>();
        const auto& sk = j.at("sinkhorn");
        m.sinkhorn.tol = sk.at("tol").get<double>();
        m.sinkhorn.max_iter = sk.at("max_iter").get<int>();
        m.sinkhorn.median_cost_scaling = sk.at("median_cost_scaling").get<bool>();
        m.sinkhorn.epsilon_scaling = sk.at("epsilon_scaling").get<bool>();
        m.sinkhorn.scaling_factor = sk.at("scaling_factor").get<double>();
        m.sinkhorn.stage_iter = sk.at("stage_iter").get<int>();
        m.sinkhorn.newton_after = sk.at("newton_after").get<int>();

        const auto& ref = j.at("reference");
        m.reference.measure = EmpiricalMeasure(unblob(ref.at("support")));
        m.reference.strategy = parse_reference_strategy(ref.at("strategy").get<std::string>());
        m.reference.description = ref.at("description").get<std::string>();
        if (!ref.at("source_sample").is_null()) m.reference.source_sample = ref.at("source_sample").get<Index>();
        m.reference.indices = ref.at("indices").get<std::vector<Index>>();

        const auto& sw = j.at("swwl");
        m.swwl.seed = sw.at("seed").get<std::uint64_t>();
        m.swwl.n_quantiles = sw.at("n_quantiles").get<int>();
        m.swwl.directions = unblob(sw.at("directions"));

        auto inputs = std::make_shared<GpInputs>();
        inputs->embeddings = unblob(j.at("train_inputs").at("embeddings"));
        inputs->scalars = unblob(j.at("train_inputs").at("scalars"));
        m.train_inputs = inputs;

        for (const auto& s : j.at("samples")) {
            m.sample_ids.push_back(s.at("id").get<std::string>());
            m.fingerprints.push_back(s.at("fingerprint").get<std::string>());
        }
        for (const auto& fj : j.at("fields")) {
            FieldModel f;
            f.name = fj.at("name").get<std::string>();
            const auto& p = fj.at("pca");
            f.pca = PcaModel(unblob_vector(p.at("mean")), unblob(p.at("basis")), unblob_vector(p.at("eigenvalues")),
                             unblob_vector(p.at("explained_variance_ratio")));
            for (const auto& gj : fj.at("gps")) {
                GpHyperparams hp;
                hp.signal_variance = gj.at("signal_variance").get<double>();
                hp.graph_lengthscale = gj.at("graph_lengthscale").get<double>();
                hp.scalar_lengthscales = gj.at("scalar_lengthscales").get<std::vector<double>>();
                hp.noise_variance = gj.at("noise_variance").get<double>();
                f.gps.emplace_back(inputs, unblob_vector(gj.at("targets")), hp);
            }
            if (static_cast<Index>(f.gps.size()) != f.pca.latent_dim())
                throw DataError("archive: GP count does not match the PCA dimension");
            m.fields.push_back(std::move(f));
        }
        return m;
    } catch (const io::json::exception& e) {
        throw DataError(std::string("archive: malformed model: ") + e.what());
    }
}

/// Archive text: a magic/version line, a checksum line over the body, then
/// the JSON body. Keys are sorted and blobs are raw little-endian doubles, so
/// identical models give identical bytes.
inline std::string serialize_model(const TrainedSurrogate& m) {
    const std::string body = model_to_json(m).dump(1) + "\n";
    Fnv1a64 h;
    h.text(body);
    return std::string(kArchiveMagic) + " " + std::to_string(kArchiveVersion) + "\nfnv1a64 " + h.hex() + " " +
           std::to_string(body.size()) + "\n" + body;
}

inline TrainedSurrogate deserialize_model(const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    std::string algo, digest;
    std::size_t length = 0;
    if (!(in >> magic >> version) || magic != kArchiveMagic) throw DataError("archive: not a model archive");
    if (version > kArchiveVersion)
        throw VersionError("archive: format version " + std::to_string(version) + " is newer than supported (" +
                           std::to_string(kArchiveVersion) + ")");
    if (!(in >> algo >> digest >> length) || algo != "fnv1a64") throw ChecksumError("archive: missing checksum line");
    in.ignore(1);
    const auto start = static_cast<std::size_t>(in.tellg());
    if (start > text.size()) throw ChecksumError("archive: truncated");
    const std::string body = text.substr(start);
    Fnv1a64 h;
    h.text(body);
    if (body.size() != length || h.hex() != digest) throw ChecksumError("archive: checksum mismatch (corrupted or truncated)");
    return model_from_json(io::parse_json(body, "archive"));
}

inline void save_model(const std::filesystem::path& path, const TrainedSurrogate& m) {
    io::write_text(path, serialize_model(m));
}

inline TrainedSurrogate load_model(const std::filesystem::path& path) { return deserialize_model(io::read_text(path)); }

} // namespace tosgp
