#pragma once

#include "tosgp/error.hpp"
#include "tosgp/graph.hpp"
#include "tosgp/optimize.hpp"
#include "tosgp/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace tosgp {

/// Training inputs of a scalar GP: one SWWL embedding and m scalars per sample.
struct GpInputs {
    Matrix embeddings; ///< N x D
    Matrix scalars;    ///< N x m, m may be 0

    [[nodiscard]] Index size() const noexcept { return embeddings.rows(); }
    [[nodiscard]] Index scalar_count() const noexcept { return scalars.cols(); }
};

/// A single GP input point.
struct GpInput {
    Vector embedding;
    Vector scalars;
};

inline GpInput input_at(const GpInputs& in, Index i) {
    return GpInput{in.embeddings.row(i).transpose(), in.scalars.row(i).transpose()};
}

struct GpHyperparams {
    double signal_variance = 1.0;
    double graph_lengthscale = 1.0;
    std::vector<double> scalar_lengthscales;
    double noise_variance = 1e-6;

    [[nodiscard]] Index parameter_count() const noexcept {
        return 3 + static_cast<Index>(scalar_lengthscales.size());
    }

    /// [log sigma^2, log l_g, log l_1..l_m, log eta^2]
    [[nodiscard]] Vector to_log() const {
        Vector v(parameter_count());
        v(0) = std::log(signal_variance);
        v(1) = std::log(graph_lengthscale);
        for (std::size_t k = 0; k < scalar_lengthscales.size(); ++k)
            v(2 + static_cast<Index>(k)) = std::log(scalar_lengthscales[k]);
        v(v.size() - 1) = std::log(noise_variance);
        return v;
    }

    static GpHyperparams from_log(const Vector& v) {
        GpHyperparams hp;
        hp.signal_variance = std::exp(v(0));
        hp.graph_lengthscale = std::exp(v(1));
        for (Index k = 2; k + 1 < v.size(); ++k) hp.scalar_lengthscales.push_back(std::exp(v(k)));
        hp.noise_variance = std::exp(v(v.size() - 1));
        return hp;
    }

    friend bool operator==(const GpHyperparams&, const GpHyperparams&) = default;
};

/// Matern-5/2 correlation at scaled distance r >= 0.
inline double matern52(double r) {
    const double s5r = std::sqrt(5.0) * r;
    return (1.0 + s5r + 5.0 * r * r / 3.0) * std::exp(-s5r);
}

namespace detail {

// d log matern52(r) / d log l, with r = |ds| / l.
inline double matern52_dlog_lengthscale(double r) {
    const double s5r = std::sqrt(5.0) * r;
    return (5.0 / 3.0) * r * r * (1.0 + s5r) / (1.0 + s5r + 5.0 * r * r / 3.0);
}

inline void check_hyperparams(const GpHyperparams& hp, Index scalar_count) {
    if (static_cast<Index>(hp.scalar_lengthscales.size()) != scalar_count)
        throw DataError("gp: expected " + std::to_string(scalar_count) + " scalar lengthscales, got " +
                        std::to_string(hp.scalar_lengthscales.size()));
    bool ok = hp.signal_variance > 0.0 && hp.graph_lengthscale > 0.0 && hp.noise_variance >= 0.0;
    for (double l : hp.scalar_lengthscales) ok = ok && l > 0.0;
    if (!ok) throw DataError("gp: hyperparameters must be positive");
}

} // namespace detail

/// Tensorized kernel sigma^2 exp(-d^2 / (2 l_g^2)) prod_k matern52(|s_k - s'_k| / l_k)
/// with d the Euclidean distance between SWWL embeddings.
inline double kernel_eval(const GpInput& a, const GpInput& b, const GpHyperparams& hp) {
    if (a.embedding.size() != b.embedding.size() || a.scalars.size() != b.scalars.size())
        throw DataError("kernel: embedding spec or scalar count mismatch");
    detail::check_hyperparams(hp, a.scalars.size());
    const double d2 = (a.embedding - b.embedding).squaredNorm();
    double k = hp.signal_variance * std::exp(-d2 / (2.0 * hp.graph_lengthscale * hp.graph_lengthscale));
    for (Index l = 0; l < a.scalars.size(); ++l)
        k *= matern52(std::abs(a.scalars(l) - b.scalars(l)) / hp.scalar_lengthscales[static_cast<std::size_t>(l)]);
    return k;
}

/// Distances between all training pairs, computed once per dataset.
struct PairDistances {
    Matrix graph_sq;
    std::vector<Matrix> scalar_abs;
};

inline PairDistances pairwise_distances(const GpInputs& in) {
    const Index n = in.size();
    PairDistances d;
    d.graph_sq = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = j + 1; i < n; ++i) {
            const double v = (in.embeddings.row(i) - in.embeddings.row(j)).squaredNorm();
            d.graph_sq(i, j) = v;
            d.graph_sq(j, i) = v;
        }
    for (Index l = 0; l < in.scalar_count(); ++l) {
        Matrix m(n, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) m(i, j) = std::abs(in.scalars(i, l) - in.scalars(j, l));
        d.scalar_abs.push_back(std::move(m));
    }
    return d;
}

/// Distances from one test point to every training point.
struct CrossDistances {
    Vector graph_sq;
    Matrix scalar_abs; ///< N x m
};

inline CrossDistances cross_distances(const GpInputs& train, const GpInput& x) {
    if (x.embedding.size() != train.embeddings.cols() || x.scalars.size() != train.scalar_count())
        throw DataError("gp: test input does not match the model's embedding spec or scalar count");
    CrossDistances c;
    c.graph_sq.resize(train.size());
    c.scalar_abs.resize(train.size(), train.scalar_count());
    for (Index i = 0; i < train.size(); ++i) {
        c.graph_sq(i) = (train.embeddings.row(i).transpose() - x.embedding).squaredNorm();
        for (Index l = 0; l < train.scalar_count(); ++l) c.scalar_abs(i, l) = std::abs(train.scalars(i, l) - x.scalars(l));
    }
    return c;
}

/// Signal Gram matrix (no noise term).
inline Matrix gram_matrix(const PairDistances& d, const GpHyperparams& hp) {
    const double l2 = hp.graph_lengthscale * hp.graph_lengthscale;
    Matrix k = hp.signal_variance * (-d.graph_sq.array() / (2.0 * l2)).exp().matrix();
    for (std::size_t l = 0; l < d.scalar_abs.size(); ++l) {
        const double len = hp.scalar_lengthscales[l];
        k.array() *= d.scalar_abs[l].unaryExpr([len](double a) { return matern52(a / len); }).array();
    }
    return k;
}

inline Vector cross_kernel(const CrossDistances& c, const GpHyperparams& hp) {
    const double l2 = hp.graph_lengthscale * hp.graph_lengthscale;
    Vector k = hp.signal_variance * (-c.graph_sq.array() / (2.0 * l2)).exp().matrix();
    for (Index l = 0; l < c.scalar_abs.cols(); ++l) {
        const double len = hp.scalar_lengthscales[static_cast<std::size_t>(l)];
        for (Index i = 0; i < k.size(); ++i) k(i) *= matern52(c.scalar_abs(i, l) / len);
    }
    return k;
}

struct Factorization {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;
};

/// Cholesky of k + noise I, adding jitter from 1e-10 tr(k)/N doubling up to
/// 1e-4 tr(k)/N until it succeeds.
inline Factorization factorize(const Matrix& k, double noise) {
    const Index n = k.rows();
    Matrix a = k;
    a.diagonal().array() += noise;
    Factorization f;
    f.llt.compute(a);
    if (f.llt.info() == Eigen::Success) return f;
    const double base = std::max(k.trace() / static_cast<double>(n), 1e-300);
    for (double j = 1e-10 * base; j <= 1e-4 * base * (1.0 + 1e-12); j *= 2.0) {
        Matrix aj = a;
        aj.diagonal().array() += j;
        f.llt.compute(aj);
        if (f.llt.info() == Eigen::Success) {
            f.jitter = j;
            return f;
        }
    }
    throw NumericalError("gp: covariance matrix not positive definite even with maximal jitter");
}

struct MllResult {
    double value = 0.0;
    /// Gradient with respect to GpHyperparams::to_log().
    Vector gradient;
    double jitter = 0.0;
};

/// Zero-mean Gaussian evidence
///   -1/2 y^T (K + eta^2 I)^-1 y - 1/2 log det(K + eta^2 I) - N/2 log 2 pi
/// with analytic gradient 1/2 tr((alpha alpha^T - A^-1) dA/dtheta).
inline MllResult log_marginal_likelihood(const GpHyperparams& hp, const PairDistances& d, const Vector& y) {
    const Index n = y.size();
    if (n < 1) throw DataError("gp: empty training set");
    if (d.graph_sq.rows() != n) throw DataError("gp: target count does not match inputs");
    detail::check_hyperparams(hp, static_cast<Index>(d.scalar_abs.size()));

    const Matrix ks = gram_matrix(d, hp);
    const Factorization f = factorize(ks, hp.noise_variance);
    const Vector alpha = f.llt.solve(y);
    const Matrix inv = f.llt.solve(Matrix::Identity(n, n));
    const Matrix w = alpha * alpha.transpose() - inv;

    MllResult r;
    r.jitter = f.jitter;
    const Matrix& l = f.llt.matrixLLT();
    r.value = -0.5 * y.dot(alpha) - l.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    const Matrix wk = w.cwiseProduct(ks);
    r.gradient.resize(hp.parameter_count());
    r.gradient(0) = 0.5 * wk.sum();
    r.gradient(1) = 0.5 * wk.cwiseProduct(d.graph_sq).sum() / (hp.graph_lengthscale * hp.graph_lengthscale);
    for (std::size_t s = 0; s < d.scalar_abs.size(); ++s) {
        const double len = hp.scalar_lengthscales[s];
        const Matrix ds = d.scalar_abs[s].unaryExpr([len](double a) { return detail::matern52_dlog_lengthscale(a / len); });
        r.gradient(2 + static_cast<Index>(s)) = 0.5 * wk.cwiseProduct(ds).sum();
    }
    r.gradient(r.gradient.size() - 1) = 0.5 * hp.noise_variance * w.trace();
    return r;
}

inline MllResult log_marginal_likelihood(const GpHyperparams& hp, const GpInputs& in, const Vector& y) {
    if (in.size() != y.size()) throw DataError("gp: target count does not match inputs");
    return log_marginal_likelihood(hp, pairwise_distances(in), y);
}

struct Posterior {
    Vector mean;
    Vector stddev;
};

/// Exact GP regressor with cached factorization of K + eta^2 I.
class GpModel {
public:
    GpModel() = default;

    GpModel(std::shared_ptr<const GpInputs> inputs, Vector targets, GpHyperparams hp)
        : inputs_(std::move(inputs)), targets_(std::move(targets)), hp_(std::move(hp)) {
        if (!inputs_ || inputs_->size() < 1) throw DataError("gp: empty training set");
        if (inputs_->size() != targets_.size()) throw DataError("gp: target count does not match inputs");
        detail::check_hyperparams(hp_, inputs_->scalar_count());
        const PairDistances d = pairwise_distances(*inputs_);
        const Matrix ks = gram_matrix(d, hp_);
        Factorization f = factorize(ks, hp_.noise_variance);
        llt_ = std::move(f.llt);
        jitter_ = f.jitter;
        alpha_ = llt_.solve(targets_);
        const Matrix& l = llt_.matrixLLT();
        const auto n = static_cast<double>(targets_.size());
        log_likelihood_ = -0.5 * targets_.dot(alpha_) - l.diagonal().array().log().sum() -
                          0.5 * n * std::log(2.0 * std::numbers::pi);
    }

    [[nodiscard]] const GpHyperparams& hyperparams() const noexcept { return hp_; }
    [[nodiscard]] const GpInputs& inputs() const noexcept { return *inputs_; }
    [[nodiscard]] std::shared_ptr<const GpInputs> shared_inputs() const noexcept { return inputs_; }
    [[nodiscard]] const Vector& targets() const noexcept { return targets_; }
    [[nodiscard]] const Vector& alpha() const noexcept { return alpha_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] double log_likelihood() const noexcept { return log_likelihood_; }

    /// Latent posterior mean and standard deviation at one test point.
    [[nodiscard]] std::pair<double, double> predict(const CrossDistances& c) const {
        const Vector ks = cross_kernel(c, hp_);
        const double mean = ks.dot(alpha_);
        const Vector v = llt_.matrixL().solve(ks);
        const double var = hp_.signal_variance - v.squaredNorm();
        return {mean, std::sqrt(std::max(var, 0.0))};
    }

    [[nodiscard]] std::pair<double, double> predict(const GpInput& x) const {
        return predict(cross_distances(*inputs_, x));
    }

private:
    std::shared_ptr<const GpInputs> inputs_;
    Vector targets_;
    GpHyperparams hp_;
    Eigen::LLT<Matrix> llt_;
    Vector alpha_;
    double jitter_ = 0.0;
    double log_likelihood_ = 0.0;
};

inline Posterior posterior(const GpModel& model, const std::vector<GpInput>& tests) {
    Posterior p;
    p.mean.resize(static_cast<Index>(tests.size()));
    p.stddev.resize(static_cast<Index>(tests.size()));
    for (std::size_t i = 0; i < tests.size(); ++i) {
        auto [m, s] = model.predict(tests[i]);
        p.mean(static_cast<Index>(i)) = m;
        p.stddev(static_cast<Index>(i)) = s;
    }
    return p;
}

struct GpFitOptions {
    int restarts = 3;
    std::uint64_t seed = 0;
    LbfgsOptions lbfgs;
    /// Starting point of the first restart; median heuristic when empty.
    std::optional<GpHyperparams> initial;
    bool optimize_noise = true;
    /// Lower bound of eta^2 relative to the mean squared target.
    double min_noise_ratio = 1e-10;
};

namespace detail {

inline double positive_median(std::vector<double> v) {
    std::erase_if(v, [](double x) { return !(x > 0.0); });
    if (v.empty()) return 1.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

inline std::vector<double> upper_triangle(const Matrix& m, bool take_sqrt) {
    std::vector<double> out;
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = j + 1; i < m.rows(); ++i) out.push_back(take_sqrt ? std::sqrt(m(i, j)) : m(i, j));
    return out;
}

} // namespace detail

/// Maximizes the marginal likelihood over log-hyperparameters with L-BFGS
/// from `restarts` starting points and keeps the best. The first start is
/// options.initial (or the median heuristic); the others perturb it by a
/// factor in [e^-1, e^1] per parameter.
inline GpModel fit_gp(std::shared_ptr<const GpInputs> inputs, const Vector& y, const GpFitOptions& opts = {}) {
    if (!inputs || inputs->size() < 2) throw DataError("gp: fitting needs at least 2 training points");
    if (inputs->size() != y.size()) throw DataError("gp: target count does not match inputs");
    if (opts.restarts < 1) throw DataError("gp: restarts must be >= 1");

    const PairDistances d = pairwise_distances(*inputs);
    const Index m = inputs->scalar_count();
    const double y_scale = y.squaredNorm() > 0.0 ? y.squaredNorm() / static_cast<double>(y.size()) : 1.0;
    const double med_g = detail::positive_median(detail::upper_triangle(d.graph_sq, true));
    std::vector<double> med_s;
    for (const auto& s : d.scalar_abs) med_s.push_back(detail::positive_median(detail::upper_triangle(s, false)));

    GpHyperparams base;
    if (opts.initial) {
        base = *opts.initial;
        detail::check_hyperparams(base, m);
    } else {
        base.signal_variance = y_scale;
        base.graph_lengthscale = med_g;
        base.scalar_lengthscales = med_s;
        base.noise_variance = 1e-4 * y_scale;
    }

    const Index p = 3 + m;
    Vector lower(p), upper(p);
    lower(0) = std::log(1e-6 * y_scale);
    upper(0) = std::log(1e6 * y_scale);
    lower(1) = std::log(1e-3 * med_g);
    upper(1) = std::log(1e3 * med_g);
    for (Index k = 0; k < m; ++k) {
        lower(2 + k) = std::log(1e-3 * med_s[static_cast<std::size_t>(k)]);
        upper(2 + k) = std::log(1e3 * med_s[static_cast<std::size_t>(k)]);
    }
    if (opts.optimize_noise) {
        lower(p - 1) = std::log(opts.min_noise_ratio * y_scale);
        upper(p - 1) = std::log(10.0 * y_scale);
    } else {
        if (!(base.noise_variance > 0.0)) throw DataError("gp: a fixed noise variance must be positive");
        lower(p - 1) = upper(p - 1) = std::log(base.noise_variance);
    }

    auto objective = [&](const Vector& x, Vector& grad) {
        const MllResult r = log_marginal_likelihood(GpHyperparams::from_log(x), d, y);
        grad = -r.gradient;
        return -r.value;
    };

    Rng rng(opts.seed);
    const Vector start = base.to_log().cwiseMax(lower).cwiseMin(upper);
    std::optional<LbfgsResult> best;
    for (int r = 0; r < opts.restarts; ++r) {
        Vector x0 = start;
        if (r > 0)
            for (Index k = 0; k < p; ++k) x0(k) += rng.uniform(-1.0, 1.0);
        try {
            LbfgsResult res = minimize_lbfgs(objective, x0, lower, upper, opts.lbfgs);
            if (!best || res.value < best->value) best = std::move(res);
        } catch (const NumericalError&) {
        }
    }
    if (!best) throw NumericalError("gp: every restart failed (ill-conditioned covariance)");
    return GpModel(std::move(inputs), y, GpHyperparams::from_log(best->x));
}

} // namespace tosgp
