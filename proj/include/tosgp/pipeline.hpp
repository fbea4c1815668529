#pragma once

#include "tosgp/dimred.hpp"
#include "tosgp/error.hpp"
#include "tosgp/gp.hpp"
#include "tosgp/graph.hpp"
#include "tosgp/hash.hpp"
#include "tosgp/ot.hpp"
#include "tosgp/parallel.hpp"
#include "tosgp/plan_cache.hpp"
#include "tosgp/reference.hpp"
#include "tosgp/swwl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tosgp {

/// One input graph with its output signals (one per field) and input scalars.
struct Sample {
    std::string id;
    AttributedGraph graph;
    std::vector<NodeSignal> signals;
    Vector scalars;
};

struct Dataset {
    std::string id;
    std::vector<std::string> field_names;
    std::vector<Sample> samples;

    [[nodiscard]] Index scalar_count() const { return samples.empty() ? 0 : samples.front().scalars.size(); }
};

inline std::string fingerprint(const Sample& s) {
    Fnv1a64 h;
    const auto& g = s.graph;
    h.value(g.node_count).value(g.features.rows()).value(g.features.cols());
    h.bytes(g.features.data(), static_cast<std::size_t>(g.features.size()) * sizeof(double));
    for (auto [u, v] : g.edges) h.value(u).value(v);
    for (double w : g.edge_weights) h.value(w);
    for (const auto& y : s.signals) {
        h.value(y.size());
        h.bytes(y.data(), static_cast<std::size_t>(y.size()) * sizeof(double));
    }
    h.value(s.scalars.size());
    h.bytes(s.scalars.data(), static_cast<std::size_t>(s.scalars.size()) * sizeof(double));
    return h.hex();
}

inline void check_sample(const Sample& s, std::size_t field_count, Index scalar_count) {
    if (auto r = validate_graph(s.graph); !r.ok()) throw DataError("sample " + s.id + ": " + r.summary());
    if (s.signals.size() != field_count)
        throw DataError("sample " + s.id + ": expected " + std::to_string(field_count) + " signals, got " +
                        std::to_string(s.signals.size()));
    for (const auto& y : s.signals) {
        if (y.size() != s.graph.node_count)
            throw DataError("sample " + s.id + ": signal length " + std::to_string(y.size()) + " != node count " +
                            std::to_string(s.graph.node_count));
        if (!y.allFinite()) throw DataError("sample " + s.id + ": non-finite signal value");
    }
    if (s.scalars.size() != scalar_count)
        throw DataError("sample " + s.id + ": expected " + std::to_string(scalar_count) + " scalar inputs");
}

/// WL-lifted point clouds of every sample.
inline std::vector<EmpiricalMeasure> training_measures(const std::vector<Sample>& samples, int wl_iters, int jobs = 1) {
    std::vector<EmpiricalMeasure> out(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        out[i] = EmpiricalMeasure(continuous_wl_embed(samples[i].graph, wl_iters).values);
    });
    return out;
}

struct TrainConfig {
    double lambda = 1e-3;
    /// Regularization of test-time plans; equal to lambda when unset.
    std::optional<double> lambda0;
    int wl_iters = 0;
    SinkhornOptions sinkhorn;
    PcaOptions pca;
    int n_proj = 50;
    int n_quantiles = 500;
    std::uint64_t seed = 0;
    int gp_restarts = 3;
    LbfgsOptions lbfgs;
    bool warm_start = true;
    int jobs = 1;
    bool skip_bad_samples = false;
};

struct FieldModel {
    std::string name;
    PcaModel pca;
    std::vector<GpModel> gps;
};

struct TrainedSurrogate {
    std::string dataset_id;
    ReferenceMeasure reference;
    double lambda = 0.0;
    double lambda0 = 0.0;
    int wl_iters = 0;
    SinkhornOptions sinkhorn;
    SwwlSpec swwl;
    std::shared_ptr<const GpInputs> train_inputs;
    std::vector<FieldModel> fields;
    std::vector<std::string> sample_ids;
    std::vector<std::string> fingerprints;

    [[nodiscard]] Index scalar_count() const { return train_inputs ? train_inputs->scalar_count() : 0; }
    [[nodiscard]] Index feature_dim() const { return reference.dim() / (wl_iters + 1); }
};

struct TrainDiagnostics {
    /// Indices (into the dataset) of the samples actually used.
    std::vector<std::size_t> used;
    std::vector<std::string> skipped;
    /// Per field: N x n_ref transferred fields.
    std::vector<Matrix> transferred;
    /// Per field, per used sample: back-transferred reconstruction.
    std::vector<std::vector<Vector>> reconstructions;
    /// Per field: train approximation RRMSE (NaN when every training signal is zero).
    std::vector<double> approximation_rrmse;
};

struct TrainOutput {
    TrainedSurrogate model;
    TrainDiagnostics diagnostics;
};

struct RrmseResult {
    double total = 0.0;
    /// RRMSE_i^2 per sample (NaN for excluded samples).
    std::vector<double> contributions;
    std::vector<std::size_t> excluded;
};

/// RRMSE^2 = mean_i |y_i - yhat_i|^2 / (n_i |y_i|_inf^2). Samples whose truth
/// is identically zero are excluded and listed.
inline RrmseResult rrmse(const std::vector<Vector>& truth, const std::vector<Vector>& pred) {
    if (truth.size() != pred.size()) throw DataError("rrmse: truth and prediction counts differ");
    if (truth.empty()) throw DataError("rrmse: no samples");
    RrmseResult r;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].size() != pred[i].size())
            throw DataError("rrmse: length mismatch for sample " + std::to_string(i));
        const double inf = truth[i].size() ? truth[i].lpNorm<Eigen::Infinity>() : 0.0;
        if (!(inf > 0.0)) {
            r.excluded.push_back(i);
            r.contributions.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double c = (truth[i] - pred[i]).squaredNorm() / (static_cast<double>(truth[i].size()) * inf * inf);
        r.contributions.push_back(c);
        sum += c;
        ++used;
    }
    if (used == 0) throw DataError("rrmse: every truth signal is identically zero");
    r.total = std::sqrt(sum / static_cast<double>(used));
    return r;
}

namespace detail {

inline std::string sample_context(const Sample& s) { return "sample " + (s.id.empty() ? "?" : s.id) + ": "; }

inline TransportPlan plan_for(const EmpiricalMeasure& mu, const ReferenceMeasure& ref, double lambda,
                              const SinkhornOptions& opts, PlanCache* cache) {
    return cache ? cache->get_or_compute(mu, ref.measure, lambda, opts) : sinkhorn_plan(mu, ref.measure, lambda, opts);
}

inline std::uint64_t gp_seed(std::uint64_t base, std::size_t field, std::size_t coeff) {
    return base + 1000003ULL * field + 7919ULL * coeff;
}

} // namespace detail

/// Training phase: plans to the reference, transferred fields, PCA, and one
/// GP per retained coefficient of every output field.
inline TrainOutput train(const Dataset& data, const ReferenceMeasure& reference, const TrainConfig& cfg,
                         PlanCache* cache = nullptr) {
    if (data.samples.empty()) throw DataError("train: empty dataset");
    if (cfg.wl_iters < 0) throw DataError("train: WL iterations must be >= 0");
    const Index scalar_count = data.scalar_count();
    for (const auto& s : data.samples) check_sample(s, data.field_names.size(), scalar_count);
    const Index d = data.samples.front().graph.feature_dim();
    for (const auto& s : data.samples)
        if (s.graph.feature_dim() != d) throw DataError(detail::sample_context(s) + "feature dimension differs");
    if (reference.dim() != d * (cfg.wl_iters + 1))
        throw DataError("train: reference dimension " + std::to_string(reference.dim()) + " != d(H+1) = " +
                        std::to_string(d * (cfg.wl_iters + 1)));

    const std::size_t n_all = data.samples.size();
    std::vector<EmpiricalMeasure> measures(n_all);
    std::vector<std::optional<TransportPlan>> plans(n_all);
    std::vector<std::string> failures(n_all);
    parallel_for(n_all, cfg.jobs, [&](std::size_t i) {
        const Sample& s = data.samples[i];
        measures[i] = EmpiricalMeasure(continuous_wl_embed(s.graph, cfg.wl_iters).values);
        try {
            plans[i] = detail::plan_for(measures[i], reference, cfg.lambda, cfg.sinkhorn, cache);
        } catch (const ConvergenceError& e) {
            if (!cfg.skip_bad_samples)
                throw ConvergenceError(detail::sample_context(s) + e.what(), e.residual(), e.iterations());
            failures[i] = detail::sample_context(s) + e.what();
        }
    });

    TrainOutput out;
    auto& diag = out.diagnostics;
    for (std::size_t i = 0; i < n_all; ++i) {
        if (plans[i]) diag.used.push_back(i);
        else diag.skipped.push_back(failures[i]);
    }
    for (const auto& msg : diag.skipped) std::cerr << "warning: skipped " << msg << '\n';
    const auto n = static_cast<Index>(diag.used.size());
    if (n < 2) throw DataError("train: fewer than 2 usable samples");

    TrainedSurrogate& model = out.model;
    model.dataset_id = data.id;
    model.reference = reference;
    model.lambda = cfg.lambda;
    model.lambda0 = cfg.lambda0.value_or(cfg.lambda);
    model.wl_iters = cfg.wl_iters;
    model.sinkhorn = cfg.sinkhorn;
    model.swwl = make_swwl_spec(reference.dim(), cfg.n_proj, cfg.n_quantiles, cfg.seed);

    auto inputs = std::make_shared<GpInputs>();
    inputs->embeddings.resize(n, model.swwl.embedding_size());
    inputs->scalars.resize(n, scalar_count);
    parallel_for(diag.used.size(), cfg.jobs, [&](std::size_t k) {
        const std::size_t i = diag.used[k];
        inputs->embeddings.row(static_cast<Index>(k)) = swwl_embed(measures[i].support(), model.swwl).transpose();
        inputs->scalars.row(static_cast<Index>(k)) = data.samples[i].scalars.transpose();
    });
    model.train_inputs = inputs;
    for (std::size_t i : diag.used) {
        model.sample_ids.push_back(data.samples[i].id);
        model.fingerprints.push_back(fingerprint(data.samples[i]));
    }

    const Index n_ref = reference.size();
    for (std::size_t f = 0; f < data.field_names.size(); ++f) {
        Matrix t(n, n_ref);
        std::vector<Vector> recon(diag.used.size());
        std::vector<Vector> truth(diag.used.size());
        for (std::size_t k = 0; k < diag.used.size(); ++k) {
            const std::size_t i = diag.used[k];
            const Vector ti = transfer_signal(*plans[i], data.samples[i].signals[f]);
            t.row(static_cast<Index>(k)) = ti.transpose();
            recon[k] = back_transfer(*plans[i], ti);
            truth[k] = data.samples[i].signals[f];
        }
        FieldModel fm;
        fm.name = data.field_names[f];
        fm.pca = fit_pca(t, cfg.pca);
        const Index q = fm.pca.latent_dim();
        const Matrix coeffs = (t.rowwise() - fm.pca.mean().transpose()) * fm.pca.basis();

        std::vector<std::optional<GpModel>> gps(static_cast<std::size_t>(q));
        auto fit_one = [&](Index j, std::optional<GpHyperparams> init) {
            GpFitOptions o;
            o.restarts = cfg.gp_restarts;
            o.seed = detail::gp_seed(cfg.seed, f, static_cast<std::size_t>(j));
            o.lbfgs = cfg.lbfgs;
            o.initial = std::move(init);
            gps[static_cast<std::size_t>(j)] = fit_gp(inputs, coeffs.col(j), o);
        };
        if (q > 0) {
            fit_one(0, std::nullopt);
            const GpHyperparams first = gps[0]->hyperparams();
            const double s0 = std::max(coeffs.col(0).squaredNorm(), 1e-300);
            parallel_for(static_cast<std::size_t>(q - 1), cfg.jobs, [&](std::size_t jj) {
                const Index j = static_cast<Index>(jj) + 1;
                std::optional<GpHyperparams> init;
                if (cfg.warm_start) {
                    GpHyperparams hp = first;
                    const double sj = coeffs.col(j).squaredNorm();
                    const double ratio = sj > 0.0 ? sj / s0 : 1.0;
                    hp.signal_variance *= ratio;
                    hp.noise_variance *= ratio;
                    init = hp;
                }
                fit_one(j, std::move(init));
            });
        }
        for (auto& g : gps) fm.gps.push_back(std::move(*g));
        model.fields.push_back(std::move(fm));

        diag.transferred.push_back(std::move(t));
        const bool any_nonzero =
            std::any_of(truth.begin(), truth.end(), [](const Vector& y) { return y.cwiseAbs().maxCoeff() > 0.0; });
        diag.approximation_rrmse.push_back(any_nonzero ? rrmse(truth, recon).total
                                                       : std::numeric_limits<double>::quiet_NaN());
        diag.reconstructions.push_back(std::move(recon));
    }
    return out;
}

struct PredictionResult {
    std::string field;
    Vector signal;
    /// Per-node standard deviation (sqrt of the diagonal of the signal covariance).
    Vector stddev;
    Vector transferred;
    Vector coeff_mean;
    Vector coeff_std;
    /// Full n x n signal covariance, only when requested.
    std::optional<Matrix> covariance;
};

struct PredictOptions {
    bool full_covariance = false;
    PlanCache* cache = nullptr;
};

/// Test phase given an already computed test plan.
inline std::vector<PredictionResult> predict_with_plan(const TrainedSurrogate& model, const EmpiricalMeasure& measure,
                                                       const Vector& scalars, const TransportPlan& plan,
                                                       bool full_covariance = false) {
    if (plan.cols() != model.reference.size() || plan.rows() != measure.size())
        throw DataError("predict: plan shape does not match the test graph and reference");
    const GpInput x{swwl_embed(measure.support(), model.swwl), scalars};
    const CrossDistances cross = cross_distances(*model.train_inputs, x);
    const Matrix np = back_operator(plan);

    std::vector<PredictionResult> out;
    for (const auto& fm : model.fields) {
        PredictionResult r;
        r.field = fm.name;
        const Index q = fm.pca.latent_dim();
        r.coeff_mean.resize(q);
        r.coeff_std.resize(q);
        for (Index j = 0; j < q; ++j) {
            auto [m, s] = fm.gps[static_cast<std::size_t>(j)].predict(cross);
            r.coeff_mean(j) = m;
            r.coeff_std(j) = s;
        }
        r.transferred = fm.pca.decode(r.coeff_mean);
        r.signal = np * r.transferred;
        const Matrix b = np * fm.pca.basis();
        const Vector var = b.array().square().matrix() * r.coeff_std.array().square().matrix();
        r.stddev = var.cwiseMax(0.0).cwiseSqrt();
        if (full_covariance) r.covariance = propagate_covariance(plan, fm.pca.field_covariance(r.coeff_std));
        out.push_back(std::move(r));
    }
    return out;
}

inline TransportPlan test_plan(const TrainedSurrogate& model, const EmpiricalMeasure& measure, PlanCache* cache = nullptr) {
    return detail::plan_for(measure, model.reference, model.lambda0, model.sinkhorn, cache);
}

inline EmpiricalMeasure test_measure(const TrainedSurrogate& model, const AttributedGraph& graph) {
    if (graph.feature_dim() * (model.wl_iters + 1) != model.reference.dim())
        throw DataError("predict: graph feature dimension does not match the model");
    return EmpiricalMeasure(continuous_wl_embed(graph, model.wl_iters).values);
}

/// Test phase: coefficient posteriors, decoded transferred field, test plan,
/// back-transferred signal and per-node standard deviations, per field.
inline std::vector<PredictionResult> predict(const TrainedSurrogate& model, const AttributedGraph& graph,
                                             const Vector& scalars, const PredictOptions& opts = {}) {
    require_valid(graph);
    if (scalars.size() != model.scalar_count())
        throw DataError("predict: expected " + std::to_string(model.scalar_count()) + " scalar inputs");
    const EmpiricalMeasure mu = test_measure(model, graph);
    const TransportPlan plan = test_plan(model, mu, opts.cache);
    return predict_with_plan(model, mu, scalars, plan, opts.full_covariance);
}

struct ErrorDecomposition {
    std::string field;
    /// RRMSE between truths and their transfer round trip.
    double approximation = 0.0;
    /// RRMSE between true and predicted transferred fields.
    double transferred_prediction = 0.0;
    double total = 0.0;
    /// RRMSE of the constant predictor (train mean field, back-transferred).
    double mean_baseline = 0.0;
    RrmseResult total_detail;
};

inline std::vector<ErrorDecomposition> error_decomposition(const TrainedSurrogate& model, const std::vector<Sample>& test,
                                                           int jobs = 1, PlanCache* cache = nullptr) {
    if (test.empty()) throw DataError("error decomposition: empty test set");
    const std::size_t nf = model.fields.size();
    for (const auto& s : test) check_sample(s, nf, model.scalar_count());

    struct PerSample {
        std::vector<Vector> y, approx, t, t_hat, y_hat, baseline;
    };
    std::vector<PerSample> per(test.size());
    parallel_for(test.size(), jobs, [&](std::size_t i) {
        const Sample& s = test[i];
        const EmpiricalMeasure mu = test_measure(model, s.graph);
        TransportPlan plan;
        try {
            plan = test_plan(model, mu, cache);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(detail::sample_context(s) + e.what(), e.residual(), e.iterations());
        }
        const auto preds = predict_with_plan(model, mu, s.scalars, plan);
        for (std::size_t f = 0; f < nf; ++f) {
            const Vector t = transfer_signal(plan, s.signals[f]);
            per[i].y.push_back(s.signals[f]);
            per[i].approx.push_back(back_transfer(plan, t));
            per[i].t.push_back(t);
            per[i].t_hat.push_back(preds[f].transferred);
            per[i].y_hat.push_back(preds[f].signal);
            per[i].baseline.push_back(back_transfer(plan, model.fields[f].pca.mean()));
        }
    });

    std::vector<ErrorDecomposition> out;
    for (std::size_t f = 0; f < nf; ++f) {
        auto collect = [&](auto member) {
            std::vector<Vector> v;
            for (const auto& p : per) v.push_back((p.*member)[f]);
            return v;
        };
        const auto y = collect(&PerSample::y);
        ErrorDecomposition e;
        e.field = model.fields[f].name;
        e.approximation = rrmse(y, collect(&PerSample::approx)).total;
        e.transferred_prediction = rrmse(collect(&PerSample::t), collect(&PerSample::t_hat)).total;
        e.total_detail = rrmse(y, collect(&PerSample::y_hat));
        e.total = e.total_detail.total;
        e.mean_baseline = rrmse(y, collect(&PerSample::baseline)).total;
        out.push_back(std::move(e));
    }
    return out;
}

/// Train-only reconstruction criterion: RRMSE between each training signal
/// and its transfer round trip through the reference, averaged over fields.
inline double train_approximation_rrmse(const Dataset& data, const ReferenceMeasure& reference, double lambda,
                                        int wl_iters, const SinkhornOptions& opts, int jobs = 1,
                                        PlanCache* cache = nullptr) {
    const std::size_t n = data.samples.size();
    std::vector<std::vector<Vector>> recon(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        const Sample& s = data.samples[i];
        const EmpiricalMeasure mu(continuous_wl_embed(s.graph, wl_iters).values);
        const TransportPlan plan = detail::plan_for(mu, reference, lambda, opts, cache);
        for (const auto& y : s.signals) recon[i].push_back(back_transfer(plan, transfer_signal(plan, y)));
    });
    double acc = 0.0;
    for (std::size_t f = 0; f < data.field_names.size(); ++f) {
        std::vector<Vector> truth, pred;
        for (std::size_t i = 0; i < n; ++i) {
            truth.push_back(data.samples[i].signals[f]);
            pred.push_back(recon[i][f]);
        }
        acc += rrmse(truth, pred).total;
    }
    return acc / static_cast<double>(data.field_names.size());
}

struct GridCell {
    double lambda = 0.0;
    int wl_iters = 0;
    std::size_t reference_index = 0;
    std::string reference_description;
    double score = std::numeric_limits<double>::infinity();
    bool ok = false;
    std::string reason;
};

struct GridOptions {
    SinkhornOptions sinkhorn;
    int jobs = 1;
    /// When > 0, score cells by test RRMSE of a full model trained on the
    /// leading samples and evaluated on this trailing fraction.
    double validation_fraction = 0.0;
    TrainConfig train;
};

/// Scores every (lambda, H, reference) cell and returns them sorted by
/// ascending score, failed cells last in grid order.
inline std::vector<GridCell> grid_search(const Dataset& data, const std::vector<double>& lambdas,
                                         const std::vector<int>& wl_grid, const std::vector<ReferenceSpec>& references,
                                         const GridOptions& opts = {}, PlanCache* cache = nullptr) {
    if (lambdas.empty() || wl_grid.empty() || references.empty()) throw DataError("grid search: empty grid");
    if (!(opts.validation_fraction >= 0.0 && opts.validation_fraction < 1.0))
        throw DataError("grid search: validation fraction must lie in [0, 1)");
    for (const auto& s : data.samples) check_sample(s, data.field_names.size(), data.scalar_count());

    Dataset fit_part = data;
    std::vector<Sample> held_out;
    if (opts.validation_fraction > 0.0) {
        const auto n_val = static_cast<std::size_t>(
            std::ceil(opts.validation_fraction * static_cast<double>(data.samples.size())));
        if (n_val == 0 || n_val + 2 > data.samples.size()) throw DataError("grid search: validation split too small");
        held_out.assign(data.samples.end() - static_cast<std::ptrdiff_t>(n_val), data.samples.end());
        fit_part.samples.resize(data.samples.size() - n_val);
    }

    std::vector<GridCell> cells;
    for (int h : wl_grid) {
        std::vector<EmpiricalMeasure> measures;
        std::string measure_error;
        try {
            measures = training_measures(fit_part.samples, h, opts.jobs);
        } catch (const Error& e) {
            measure_error = e.what();
        }
        for (std::size_t r = 0; r < references.size(); ++r) {
            std::optional<ReferenceMeasure> ref;
            std::string ref_error = measure_error;
            if (ref_error.empty()) {
                try {
                    ref = build_reference(references[r], measures, opts.jobs);
                } catch (const Error& e) {
                    ref_error = e.what();
                }
            }
            for (double lambda : lambdas) {
                GridCell c;
                c.lambda = lambda;
                c.wl_iters = h;
                c.reference_index = r;
                if (!ref) {
                    c.reason = ref_error;
                    cells.push_back(std::move(c));
                    continue;
                }
                c.reference_description = ref->description;
                try {
                    if (opts.validation_fraction > 0.0) {
                        TrainConfig tc = opts.train;
                        tc.lambda = lambda;
                        tc.wl_iters = h;
                        tc.sinkhorn = opts.sinkhorn;
                        tc.jobs = opts.jobs;
                        const auto trained = train(fit_part, *ref, tc, cache);
                        const auto dec = error_decomposition(trained.model, held_out, opts.jobs, cache);
                        double acc = 0.0;
                        for (const auto& e : dec) acc += e.total;
                        c.score = acc / static_cast<double>(dec.size());
                    } else {
                        c.score = train_approximation_rrmse(fit_part, *ref, lambda, h, opts.sinkhorn, opts.jobs, cache);
                    }
                    c.ok = true;
                } catch (const Error& e) {
                    c.reason = e.what();
                }
                cells.push_back(std::move(c));
            }
        }
    }
    std::stable_sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
        if (a.ok != b.ok) return a.ok;
        return a.ok && a.score < b.score;
    });
    return cells;
}

} // namespace tosgp
