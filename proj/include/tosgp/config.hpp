#pragma once

#include "tosgp/error.hpp"
#include "tosgp/io.hpp"
#include "tosgp/pipeline.hpp"
#include "tosgp/reference.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace tosgp {

/// Every tunable of a run. Loaded from a JSON config file; CLI flags override
/// individual keys.
struct RunConfig {
    TrainConfig train;
    ReferenceSpec reference;
    /// Explicit reference point file (strategy "explicit").
    std::string reference_file;
    std::string cache_dir;
    std::vector<double> grid_lambdas{1e-4, 1e-3, 1e-2};
    std::vector<int> grid_wl_iters{0};
    double validation_fraction = 0.0;

    /// Throws DataError naming the first out-of-range value.
    void validate() const {
        auto fail = [](const std::string& what) { throw DataError("config: " + what); };
        const auto& t = train;
        if (!(t.lambda > 0.0 && std::isfinite(t.lambda))) fail("lambda must be > 0");
        if (t.lambda0 && !(*t.lambda0 > 0.0 && std::isfinite(*t.lambda0))) fail("lambda0 must be > 0");
        if (t.wl_iters < 0) fail("wl_iters must be >= 0");
        if (t.n_proj < 1) fail("n_proj must be >= 1");
        if (t.n_quantiles < 2) fail("n_quantiles must be >= 2");
        if (!(t.pca.var_threshold > 0.0 && t.pca.var_threshold <= 1.0)) fail("pca_threshold must lie in (0, 1]");
        if (t.pca.min_components < 1) fail("min_q must be >= 1");
        if (t.gp_restarts < 1) fail("gp_restarts must be >= 1");
        if (t.lbfgs.max_iter < 1) fail("gp_max_iter must be >= 1");
        if (!(t.sinkhorn.tol > 0.0)) fail("sinkhorn_tol must be > 0");
        if (t.sinkhorn.max_iter < 1) fail("sinkhorn_max_iter must be >= 1");
        if (t.jobs < 1) fail("jobs must be >= 1");
        if (reference.size < 0) fail("reference.size must be >= 0");
        if (reference.sample < 0) fail("reference.sample must be >= 0");
        if (grid_lambdas.empty() || grid_wl_iters.empty()) fail("grid lists must be nonempty");
        for (double l : grid_lambdas)
            if (!(l > 0.0)) fail("grid lambdas must be > 0");
        for (int h : grid_wl_iters)
            if (h < 0) fail("grid wl_iters must be >= 0");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in [0, 1)");
    }
};

inline RunConfig parse_config(const io::json& j, const std::string& origin) {
    using io::get_field;
    io::reject_unknown_keys(j,
                            {"reference", "lambda", "lambda0", "wl_iters", "n_proj", "n_quantiles", "pca_threshold",
                             "min_q", "gp_restarts", "gp_max_iter", "warm_start", "sinkhorn_tol", "sinkhorn_max_iter",
                             "median_cost_scaling", "epsilon_scaling", "jobs", "seed", "skip_bad_samples", "cache_dir",
                             "grid"},
                            origin);
    RunConfig c;
    auto& t = c.train;
    if (j.contains("lambda")) t.lambda = get_field<double>(j, "lambda", origin);
    if (j.contains("lambda0") && !j["lambda0"].is_null()) t.lambda0 = get_field<double>(j, "lambda0", origin);
    if (j.contains("wl_iters")) t.wl_iters = get_field<int>(j, "wl_iters", origin);
    if (j.contains("n_proj")) t.n_proj = get_field<int>(j, "n_proj", origin);
    if (j.contains("n_quantiles")) t.n_quantiles = get_field<int>(j, "n_quantiles", origin);
    if (j.contains("pca_threshold")) t.pca.var_threshold = get_field<double>(j, "pca_threshold", origin);
    if (j.contains("min_q")) t.pca.min_components = get_field<Index>(j, "min_q", origin);
    if (j.contains("gp_restarts")) t.gp_restarts = get_field<int>(j, "gp_restarts", origin);
    if (j.contains("gp_max_iter")) t.lbfgs.max_iter = get_field<int>(j, "gp_max_iter", origin);
    if (j.contains("warm_start")) t.warm_start = get_field<bool>(j, "warm_start", origin);
    if (j.contains("sinkhorn_tol")) t.sinkhorn.tol = get_field<double>(j, "sinkhorn_tol", origin);
    if (j.contains("sinkhorn_max_iter")) t.sinkhorn.max_iter = get_field<int>(j, "sinkhorn_max_iter", origin);
    if (j.contains("median_cost_scaling"))
        t.sinkhorn.median_cost_scaling = get_field<bool>(j, "median_cost_scaling", origin);
    if (j.contains("epsilon_scaling")) t.sinkhorn.epsilon_scaling = get_field<bool>(j, "epsilon_scaling", origin);
    if (j.contains("jobs")) t.jobs = get_field<int>(j, "jobs", origin);
    if (j.contains("seed")) t.seed = get_field<std::uint64_t>(j, "seed", origin);
    if (j.contains("skip_bad_samples")) t.skip_bad_samples = get_field<bool>(j, "skip_bad_samples", origin);
    if (j.contains("cache_dir")) c.cache_dir = get_field<std::string>(j, "cache_dir", origin);

    if (j.contains("reference")) {
        const auto& r = j["reference"];
        const std::string ctx = origin + ": reference";
        io::reject_unknown_keys(r, {"strategy", "sample", "size", "lower", "upper", "resolution", "file", "n_proj",
                                    "n_quantiles"},
                                ctx);
        auto& spec = c.reference;
        if (r.contains("strategy")) spec.strategy = parse_reference_strategy(get_field<std::string>(r, "strategy", ctx));
        if (r.contains("sample")) spec.sample = get_field<Index>(r, "sample", ctx);
        if (r.contains("size")) spec.size = get_field<Index>(r, "size", ctx);
        if (r.contains("lower")) spec.lower = get_field<std::vector<double>>(r, "lower", ctx);
        if (r.contains("upper")) spec.upper = get_field<std::vector<double>>(r, "upper", ctx);
        if (r.contains("resolution")) spec.resolution = get_field<std::vector<Index>>(r, "resolution", ctx);
        if (r.contains("file")) c.reference_file = get_field<std::string>(r, "file", ctx);
        if (r.contains("n_proj")) spec.n_proj = get_field<int>(r, "n_proj", ctx);
        if (r.contains("n_quantiles")) spec.n_quantiles = get_field<int>(r, "n_quantiles", ctx);
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        const std::string ctx = origin + ": grid";
        io::reject_unknown_keys(g, {"lambdas", "wl_iters", "validation_fraction"}, ctx);
        if (g.contains("lambdas")) c.grid_lambdas = get_field<std::vector<double>>(g, "lambdas", ctx);
        if (g.contains("wl_iters")) c.grid_wl_iters = get_field<std::vector<int>>(g, "wl_iters", ctx);
        if (g.contains("validation_fraction"))
            c.validation_fraction = get_field<double>(g, "validation_fraction", ctx);
    }
    c.reference.seed = t.seed;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(io::parse_json(io::read_text(path), path.string()), path.string());
}

} // namespace tosgp
