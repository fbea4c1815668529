#include "tosgp/tosgp.hpp"
#include "tosgp/synthetic.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace tosgp;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Overrides {
    std::string config;
    std::optional<double> lambda;
    std::optional<int> wl_iters;
    std::optional<double> pca_threshold;
    std::optional<Index> min_q;
    std::optional<int> jobs;
    std::optional<std::uint64_t> seed;
    bool skip_bad = false;
    std::string cache_dir;

    void add_common(CLI::App* app) {
        app->add_option("--config", config, "JSON run configuration");
        app->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
        app->add_option("--seed", seed, "Random seed");
        app->add_option("--cache-dir", cache_dir, "Directory for cached transport plans");
    }

    void add_training(CLI::App* app) {
        app->add_option("--lambda", lambda, "Entropic regularization")->check(CLI::PositiveNumber);
        app->add_option("--wl-iters", wl_iters, "Continuous WL iterations")->check(CLI::NonNegativeNumber);
        app->add_option("--pca-threshold", pca_threshold, "Cumulative explained variance to keep")
            ->check(CLI::Range(0.0, 1.0));
        app->add_option("--min-q", min_q, "Minimum number of PCA components")->check(CLI::PositiveNumber);
        app->add_flag("--skip-bad-samples", skip_bad, "Drop samples whose transport plan does not converge");
    }

    [[nodiscard]] RunConfig resolve() const {
        RunConfig c = config.empty() ? RunConfig{} : load_config(config);
        if (lambda) c.train.lambda = *lambda;
        if (wl_iters) c.train.wl_iters = *wl_iters;
        if (pca_threshold) c.train.pca.var_threshold = *pca_threshold;
        if (min_q) c.train.pca.min_components = *min_q;
        if (jobs) c.train.jobs = *jobs;
        if (seed) c.train.seed = c.reference.seed = *seed;
        if (skip_bad) c.train.skip_bad_samples = true;
        if (!cache_dir.empty()) c.cache_dir = cache_dir;
        c.validate();
        return c;
    }
};

std::unique_ptr<PlanCache> make_cache(const RunConfig& c) {
    if (c.cache_dir.empty()) return nullptr;
    return std::make_unique<PlanCache>(fs::path(c.cache_dir));
}

ReferenceMeasure resolve_reference(const RunConfig& c, const std::string& reference_path, const Dataset& data) {
    if (!reference_path.empty()) return io::read_reference(reference_path);
    ReferenceSpec spec = c.reference;
    if (spec.strategy == ReferenceStrategy::Explicit) {
        if (c.reference_file.empty()) throw DataError("explicit reference strategy needs reference.file or --reference");
        spec.points = io::read_points(c.reference_file);
        spec.source = c.reference_file;
    }
    return build_reference(spec, training_measures(data.samples, c.train.wl_iters, c.train.jobs), c.train.jobs);
}

const Sample& find_sample(const Dataset& data, const std::string& id) {
    for (const auto& s : data.samples)
        if (s.id == id) return s;
    throw DataError("no sample with id '" + id + "'");
}

std::size_t find_field(const TrainedSurrogate& model, const std::string& name) {
    if (name.empty()) return 0;
    for (std::size_t f = 0; f < model.fields.size(); ++f)
        if (model.fields[f].name == name) return f;
    throw DataError("model has no field '" + name + "'");
}

void emit(const std::string& out, const io::json& j) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty()) std::cout << text;
    else io::write_text(out, text);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transport-based Gaussian-process surrogate for signals on graphs"};
    app.require_subcommand(1);
    Overrides ov;

    std::string manifest, reference, model_path, out, sample_id, field, format = "table";
    bool full_cov = false;
    std::vector<double> grid_lambdas;
    std::vector<int> grid_wl;
    synthetic::PlateOptions plate;

    auto* build_ref = app.add_subcommand("build-reference", "Build a reference point cloud from a dataset");
    build_ref->add_option("--manifest", manifest, "Dataset manifest")->required();
    build_ref->add_option("--wl-iters", ov.wl_iters, "Continuous WL iterations")->check(CLI::NonNegativeNumber);
    build_ref->add_option("--out", out, "Output reference file")->required();
    ov.add_common(build_ref);

    auto* train_cmd = app.add_subcommand("train", "Fit a surrogate model");
    train_cmd->add_option("--manifest", manifest, "Training dataset manifest")->required();
    train_cmd->add_option("--reference", reference, "Reference point file (default: build from config)");
    train_cmd->add_option("--out", out, "Output model archive")->required();
    ov.add_common(train_cmd);
    ov.add_training(train_cmd);

    auto* predict_cmd = app.add_subcommand("predict", "Predict signals for the graphs of a dataset");
    predict_cmd->add_option("--model", model_path, "Model archive")->required();
    predict_cmd->add_option("--manifest", manifest, "Dataset manifest (signals optional)")->required();
    predict_cmd->add_option("--out", out, "Output directory, one file per sample")->required();
    ov.add_common(predict_cmd);

    auto* eval_cmd = app.add_subcommand("evaluate", "RRMSE error decomposition on a test dataset");
    eval_cmd->add_option("--model", model_path, "Model archive")->required();
    eval_cmd->add_option("--manifest", manifest, "Test dataset manifest")->required();
    eval_cmd->add_option("--out", out, "Report file (default: stdout)");
    ov.add_common(eval_cmd);

    auto* grid_cmd = app.add_subcommand("grid-search", "Rank (lambda, WL iterations) by train reconstruction error");
    grid_cmd->add_option("--manifest", manifest, "Training dataset manifest")->required();
    grid_cmd->add_option("--lambda", grid_lambdas, "Lambda values (repeatable)")->check(CLI::PositiveNumber);
    grid_cmd->add_option("--wl-iters", grid_wl, "WL iteration counts (repeatable)")->check(CLI::NonNegativeNumber);
    grid_cmd->add_option("--out", out, "Report file (default: stdout)");
    ov.add_common(grid_cmd);

    auto* export_cmd = app.add_subcommand("export", "Write one prediction as a table or VTK file");
    export_cmd->add_option("--model", model_path, "Model archive")->required();
    export_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
    export_cmd->add_option("--sample", sample_id, "Sample id")->required();
    export_cmd->add_option("--field", field, "Output field (default: first)");
    export_cmd->add_option("--format", format, "table or vtk")->check(CLI::IsMember({"table", "csv", "vtk"}));
    export_cmd->add_flag("--full-covariance", full_cov, "Use the full signal covariance for the std column");
    export_cmd->add_option("--out", out, "Output file")->required();
    ov.add_common(export_cmd);

    auto* synth_cmd = app.add_subcommand("make-synthetic", "Write a synthetic plate dataset");
    synth_cmd->add_option("--samples", plate.samples, "Number of graphs")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--min-nodes", plate.min_nodes, "Smallest graph")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--max-nodes", plate.max_nodes, "Largest graph")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", plate.seed, "Random seed");
    synth_cmd->add_option("--out", out, "Output manifest path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth_cmd) {
            if (plate.min_nodes > plate.max_nodes) throw DataError("--min-nodes exceeds --max-nodes");
            io::save_dataset(out, synthetic::plate_dataset(plate));
            std::cout << "wrote " << plate.samples << " samples to " << out << '\n';
            return kOk;
        }

        const RunConfig cfg = ov.resolve();
        auto cache = make_cache(cfg);
        PlanCache* cache_ptr = cache.get();

        if (*build_ref) {
            const Dataset data = io::load_dataset(manifest, false);
            const ReferenceMeasure ref = resolve_reference(cfg, "", data);
            io::write_reference(out, ref);
            std::cout << "reference: " << ref.description << " (" << ref.size() << " points, dim " << ref.dim() << ")\n";
        } else if (*train_cmd) {
            const Dataset data = io::load_dataset(manifest);
            const ReferenceMeasure ref = resolve_reference(cfg, reference, data);
            const TrainOutput trained = train(data, ref, cfg.train, cache_ptr);
            save_model(out, trained.model);
            std::cout << "trained on " << trained.diagnostics.used.size() << " samples (" << trained.diagnostics.skipped.size()
                      << " skipped), reference " << ref.size() << " points\n";
            for (std::size_t f = 0; f < trained.model.fields.size(); ++f)
                std::cout << "field " << trained.model.fields[f].name << ": "
                          << trained.model.fields[f].pca.latent_dim() << " components, train approximation RRMSE "
                          << io::format_double(trained.diagnostics.approximation_rrmse[f]) << '\n';
        } else if (*predict_cmd) {
            const TrainedSurrogate model = load_model(model_path);
            const Dataset data = io::load_dataset(manifest, false);
            for (const auto& s : data.samples) {
                const auto preds = predict(model, s.graph, s.scalars, {.cache = cache_ptr});
                std::vector<std::string> names;
                std::vector<Vector> cols;
                for (const auto& r : preds) {
                    names.push_back(r.field);
                    names.push_back(r.field + "_std");
                    cols.push_back(r.signal);
                    cols.push_back(r.stddev);
                }
                io::write_columns(fs::path(out) / (s.id + ".txt"), names, cols);
            }
            std::cout << "predicted " << data.samples.size() << " samples into " << out << '\n';
        } else if (*eval_cmd) {
            const TrainedSurrogate model = load_model(model_path);
            const Dataset data = io::load_dataset(manifest);
            const auto dec = error_decomposition(model, data.samples, cfg.train.jobs, cache_ptr);
            io::json report = io::json::array();
            for (const auto& e : dec) {
                std::vector<std::string> excluded;
                for (std::size_t i : e.total_detail.excluded) excluded.push_back(data.samples[i].id);
                report.push_back({{"field", e.field},
                                  {"approximation", e.approximation},
                                  {"transferred_prediction", e.transferred_prediction},
                                  {"total", e.total},
                                  {"mean_baseline", e.mean_baseline},
                                  {"excluded", excluded}});
            }
            emit(out, {{"fields", report}});
        } else if (*grid_cmd) {
            const Dataset data = io::load_dataset(manifest);
            ReferenceSpec spec = cfg.reference;
            if (spec.strategy == ReferenceStrategy::Explicit) {
                if (cfg.reference_file.empty()) throw DataError("explicit reference strategy needs reference.file");
                spec.points = io::read_points(cfg.reference_file);
                spec.source = cfg.reference_file;
            }
            GridOptions go;
            go.sinkhorn = cfg.train.sinkhorn;
            go.jobs = cfg.train.jobs;
            go.validation_fraction = cfg.validation_fraction;
            go.train = cfg.train;
            const auto cells = grid_search(data, grid_lambdas.empty() ? cfg.grid_lambdas : grid_lambdas,
                                           grid_wl.empty() ? cfg.grid_wl_iters : grid_wl, {spec}, go, cache_ptr);
            io::json rows = io::json::array();
            for (const auto& c : cells) {
                io::json row = {{"lambda", c.lambda},
                                {"wl_iters", c.wl_iters},
                                {"reference", c.reference_description},
                                {"ok", c.ok}};
                if (c.ok) row["score"] = c.score;
                else row["reason"] = c.reason;
                rows.push_back(row);
            }
            emit(out, {{"ranking", rows}});
        } else if (*export_cmd) {
            const TrainedSurrogate model = load_model(model_path);
            const Dataset data = io::load_dataset(manifest, false);
            const Sample& s = find_sample(data, sample_id);
            const std::size_t f = find_field(model, field);
            auto preds = predict(model, s.graph, s.scalars, {.full_covariance = full_cov, .cache = cache_ptr});
            PredictionResult& r = preds[f];
            if (r.covariance) r.stddev = r.covariance->diagonal().cwiseMax(0.0).cwiseSqrt();
            std::optional<Vector> truth;
            if (f < s.signals.size()) truth = s.signals[f];
            export_fields(out, r, s.graph, parse_export_format(format), truth);
        }
        return kOk;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
}
