#pragma once

#include "tosgp/error.hpp"
#include "tosgp/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace tosgp {

/// Uniform-weight point cloud: n points of dimension s, each with mass 1/n.
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;

    explicit EmpiricalMeasure(Matrix support) : support_(std::move(support)) {
        if (support_.rows() < 1) throw DataError("empirical measure needs at least one point");
        if (!support_.allFinite()) throw DataError("empirical measure support contains non-finite values");
    }

    [[nodiscard]] const Matrix& support() const noexcept { return support_; }
    [[nodiscard]] Index size() const noexcept { return support_.rows(); }
    [[nodiscard]] Index dim() const noexcept { return support_.cols(); }
    [[nodiscard]] double weight() const noexcept { return 1.0 / static_cast<double>(support_.rows()); }

private:
    Matrix support_;
};

/// Pairwise squared Euclidean costs between two supports.
struct CostMatrix {
    Matrix values;
};

inline CostMatrix cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != nu.dim())
        throw DataError("cost matrix: dimension mismatch (" + std::to_string(mu.dim()) + " vs " +
                        std::to_string(nu.dim()) + ")");
    const Matrix& x = mu.support();
    const Matrix& y = nu.support();
    CostMatrix c;
    c.values.resize(x.rows(), y.rows());
    for (Index v = 0; v < y.rows(); ++v)
        for (Index u = 0; u < x.rows(); ++u) c.values(u, v) = (x.row(u) - y.row(v)).squaredNorm();
    return c;
}

struct TransportPlan {
    /// n x m coupling; rows sum to 1/n, columns to 1/m.
    Matrix coupling;
    double lambda = 0.0;
    /// L-infinity marginal residual reached by the solver.
    double residual = 0.0;
    int iterations = 0;

    [[nodiscard]] Index rows() const noexcept { return coupling.rows(); }
    [[nodiscard]] Index cols() const noexcept { return coupling.cols(); }
};

/// Largest absolute deviation of the row/column sums from 1/n and 1/m.
inline double marginal_residual(const Matrix& p) {
    const double a = 1.0 / static_cast<double>(p.rows());
    const double b = 1.0 / static_cast<double>(p.cols());
    const double r = (p.rowwise().sum().array() - a).abs().maxCoeff();
    const double c = (p.colwise().sum().array() - b).abs().maxCoeff();
    return std::max(r, c);
}

/// H(P) = -sum P (log P - 1), with 0 log 0 = 0.
inline double entropy(const Matrix& p) {
    double h = 0.0;
    for (Index j = 0; j < p.cols(); ++j)
        for (Index i = 0; i < p.rows(); ++i) {
            const double x = p(i, j);
            if (x > 0.0) h -= x * (std::log(x) - 1.0);
        }
    return h;
}

inline double transport_cost(const CostMatrix& c, const Matrix& p) { return c.values.cwiseProduct(p).sum(); }

struct SinkhornOptions {
    double tol = 1e-6;
    int max_iter = 10000;
    /// Divide the costs by their median before solving so lambda is scale-free.
    bool median_cost_scaling = false;
    /// Anneal lambda geometrically from max(C) down to the target.
    bool epsilon_scaling = true;
    double scaling_factor = 0.25;
    int stage_iter = 200;
    /// Switch the final stage to Newton steps on the dual after this many
    /// Sinkhorn iterations without convergence (negative disables). A failed
    /// Newton step falls back to this many plain iterations before retrying.
    int newton_after = 100;
};

namespace detail {

inline double median_of(const Matrix& m) {
    std::vector<double> v(m.data(), m.data() + m.size());
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

// log(sum_k exp(z_k)) over a strided range.
template <typename Get>
inline double log_sum_exp(Index count, Get&& z) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < count; ++k) mx = std::max(mx, z(k));
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (Index k = 0; k < count; ++k) s += std::exp(z(k) - mx);
    return mx + std::log(s);
}

struct NewtonState {
    Matrix p;
    Vector rows, cols;
    double sq_error = 0.0;
    double residual = 0.0;
};

inline NewtonState dual_state(const Matrix& c, const Vector& f, const Vector& g, double eps, double a, double b) {
    NewtonState s;
    s.p = ((-c).colwise() + f).rowwise() + g.transpose();
    s.p = (s.p / eps).array().exp().matrix();
    s.rows = s.p.rowwise().sum();
    s.cols = s.p.colwise().sum().transpose();
    s.sq_error = (s.rows.array() - a).square().sum() + (s.cols.array() - b).square().sum();
    s.residual = std::max((s.rows.array() - a).abs().maxCoeff(), (s.cols.array() - b).abs().maxCoeff());
    return s;
}

// One damped Newton step on the dual potentials. The Hessian system is reduced
// to its Schur complement on the smaller side. Returns false when no step
// decreases the squared marginal error.
inline bool newton_step(const Matrix& c, Vector& f, Vector& g, double eps, double a, double b, NewtonState& st) {
    const Index n = c.rows(), m = c.cols();
    if (st.rows.minCoeff() <= 1e-200 || st.cols.minCoeff() <= 1e-200) return false;
    const Vector ra = eps * (Vector::Constant(n, a) - st.rows);
    const Vector cb = eps * (Vector::Constant(m, b) - st.cols);
    Vector df, dg;
    if (n >= m) {
        const Matrix pr = st.rows.cwiseInverse().asDiagonal() * st.p;
        Matrix s = -st.p.transpose() * pr;
        s.diagonal() += st.cols;
        s.diagonal().array() += 1e-13 * s.diagonal().maxCoeff();
        dg = s.ldlt().solve(cb - pr.transpose() * ra);
        df = (ra - st.p * dg).cwiseQuotient(st.rows);
    } else {
        const Matrix pc = st.p * st.cols.cwiseInverse().asDiagonal();
        Matrix s = -pc * st.p.transpose();
        s.diagonal() += st.rows;
        s.diagonal().array() += 1e-13 * s.diagonal().maxCoeff();
        df = s.ldlt().solve(ra - pc * cb);
        dg = (cb - st.p.transpose() * df).cwiseQuotient(st.cols);
    }
    if (!df.allFinite() || !dg.allFinite()) return false;
    const double shift = dg.mean();
    dg.array() -= shift;
    df.array() += shift;
    for (double t = 1.0; t > 1e-8; t *= 0.5) {
        const Vector ft = f + t * df, gt = g + t * dg;
        NewtonState trial = dual_state(c, ft, gt, eps, a, b);
        if (trial.sq_error <= (1.0 - 2e-4 * t) * st.sq_error) {
            f = ft;
            g = gt;
            st = std::move(trial);
            return true;
        }
    }
    return false;
}

} // namespace detail

/// Entropy-regularized OT plan between two uniform measures with cost C:
/// argmin <C, P> - lambda H(P) over couplings. Log-domain Sinkhorn on the
/// dual potentials, so lambda can go far below the cost scale without
/// under/overflow. Stops when the row marginal residual (columns are exact
/// after each half-step) drops to opts.tol. A slow final stage is finished
/// with damped Newton steps, which then test both marginals.
inline TransportPlan sinkhorn_plan(const CostMatrix& cost, double lambda, const SinkhornOptions& opts = {}) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DataError("sinkhorn: lambda must be positive and finite");
    if (!(opts.tol > 0.0)) throw DataError("sinkhorn: tol must be positive");
    if (opts.max_iter < 1) throw DataError("sinkhorn: max_iter must be >= 1");

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Index n = cost.values.rows();
    const Index m = cost.values.cols();
    if (n < 1 || m < 1) throw DataError("sinkhorn: empty cost matrix");
    if (!cost.values.allFinite()) throw DataError("sinkhorn: non-finite cost");

    double scale = 1.0;
    if (opts.median_cost_scaling) {
        const double med = detail::median_of(cost.values);
        if (med > 0.0) scale = med;
    }
    const Matrix c_col = cost.values / scale;
    const RowMajor c_row = c_col;

    const double log_a = -std::log(static_cast<double>(n));
    const double log_b = -std::log(static_cast<double>(m));
    const double a = 1.0 / static_cast<double>(n);

    std::vector<double> stages;
    const double c_max = c_col.maxCoeff();
    if (opts.epsilon_scaling && c_max > lambda) {
        for (double eps = c_max; eps > lambda; eps *= opts.scaling_factor) stages.push_back(eps);
    }
    stages.push_back(lambda);

    Vector f = Vector::Zero(n);
    Vector g = Vector::Zero(m);
    Vector lse_row(n);
    double residual = std::numeric_limits<double>::infinity();
    int total = 0;

    auto fail = [&]() {
        return ConvergenceError("sinkhorn: no convergence after " + std::to_string(total) +
                                    " iterations (marginal residual " + std::to_string(residual) + ")",
                                residual, total);
    };
    auto sinkhorn_g = [&](double eps) {
        for (Index j = 0; j < m; ++j) {
            const double* cj = c_col.data() + j * n;
            g(j) = eps * (log_b - detail::log_sum_exp(n, [&](Index i) { return (f(i) - cj[i]) / eps; }));
        }
    };

    bool done = false;
    for (std::size_t s = 0; s < stages.size() && !done; ++s) {
        const double eps = stages[s];
        const bool final_stage = s + 1 == stages.size();
        for (int it = 0;; ++it) {
            if (final_stage && opts.newton_after >= 0 && it > opts.newton_after) break;
            for (Index i = 0; i < n; ++i) {
                const double* ci = c_row.data() + i * m;
                lse_row(i) = detail::log_sum_exp(m, [&](Index j) { return (g(j) - ci[j]) / eps; });
            }
            if (it > 0) {
                residual = 0.0;
                for (Index i = 0; i < n; ++i)
                    residual = std::max(residual, std::abs(std::exp(f(i) / eps + lse_row(i)) - a));
                if (residual <= opts.tol) {
                    done = final_stage;
                    break;
                }
                if (!final_stage && it >= opts.stage_iter) break;
            }
            if (total >= opts.max_iter) throw fail();
            f = eps * (log_a - lse_row.array());
            sinkhorn_g(eps);
            ++total;
        }
    }

    if (!done) {
        const double b = 1.0 / static_cast<double>(m);
        detail::NewtonState st = detail::dual_state(c_col, f, g, lambda, a, b);
        residual = st.residual;
        int plain_left = 0;
        while (residual > opts.tol) {
            if (total >= opts.max_iter) throw fail();
            if (plain_left > 0 || !detail::newton_step(c_col, f, g, lambda, a, b, st)) {
                plain_left = plain_left > 0 ? plain_left - 1 : std::max(opts.newton_after, 1);
                for (Index i = 0; i < n; ++i) {
                    const double* ci = c_row.data() + i * m;
                    f(i) = lambda * (log_a - detail::log_sum_exp(m, [&](Index j) { return (g(j) - ci[j]) / lambda; }));
                }
                sinkhorn_g(lambda);
                st = detail::dual_state(c_col, f, g, lambda, a, b);
            }
            residual = st.residual;
            ++total;
        }
    }

    TransportPlan plan;
    plan.lambda = lambda;
    plan.iterations = total;
    plan.coupling.resize(n, m);
    for (Index j = 0; j < m; ++j)
        for (Index i = 0; i < n; ++i) plan.coupling(i, j) = std::exp((f(i) + g(j) - c_col(i, j)) / lambda);
    plan.residual = marginal_residual(plan.coupling);
    return plan;
}

namespace detail {

inline std::vector<Index> lexicographic_order(const Matrix& x) {
    std::vector<Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        for (Index k = 0; k < x.cols(); ++k)
            if (x(a, k) != x(b, k)) return x(a, k) < x(b, k);
        return false;
    });
    return order;
}

inline Matrix gather_rows(const Matrix& x, const std::vector<Index>& order) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t k = 0; k < order.size(); ++k) out.row(static_cast<Index>(k)) = x.row(order[k]);
    return out;
}

} // namespace detail

/// Both supports are solved in lexicographic order and the plan is mapped
/// back, so relabelling the points permutes the plan bit for bit.
inline TransportPlan sinkhorn_plan(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double lambda,
                                   const SinkhornOptions& opts = {}) {
    const auto row_order = detail::lexicographic_order(mu.support());
    const auto col_order = detail::lexicographic_order(nu.support());
    const EmpiricalMeasure mu_sorted(detail::gather_rows(mu.support(), row_order));
    const EmpiricalMeasure nu_sorted(detail::gather_rows(nu.support(), col_order));
    TransportPlan sorted = sinkhorn_plan(cost_matrix(mu_sorted, nu_sorted), lambda, opts);
    TransportPlan plan = sorted;
    for (std::size_t i = 0; i < row_order.size(); ++i)
        for (std::size_t j = 0; j < col_order.size(); ++j)
            plan.coupling(row_order[i], col_order[j]) = sorted.coupling(static_cast<Index>(i), static_cast<Index>(j));
    return plan;
}

struct ExactPlan {
    double cost = 0.0;
    TransportPlan plan;
};

namespace detail {

// Min-cost perfect assignment on a square matrix (Hungarian method with
// potentials). Returns column assigned to each row.
inline std::vector<Index> hungarian(const Matrix& c) {
    const Index n = c.rows();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1)), v(static_cast<std::size_t>(n + 1));
    std::vector<Index> p(static_cast<std::size_t>(n + 1)), way(static_cast<std::size_t>(n + 1));
    for (Index i = 1; i <= n; ++i) {
        p[0] = i;
        Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
        std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
        do {
            used[j0] = 1;
            const Index i0 = p[j0];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const Index j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> row_to_col(static_cast<std::size_t>(n));
    for (Index j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

} // namespace detail

/// Exact unregularized OT between uniform measures. Each source point is
/// replicated lcm(n,m)/n times and each target lcm(n,m)/m times; an optimal
/// assignment of the replicas is an optimal vertex of the transportation
/// polytope. For n == m the plan is (1/n) times a permutation matrix.
inline ExactPlan exact_plan_oracle(const CostMatrix& cost, Index max_size = 512) {
    const Index n = cost.values.rows();
    const Index m = cost.values.cols();
    if (n < 1 || m < 1) throw DataError("exact plan: empty cost matrix");
    const Index big = std::lcm(n, m);
    if (big > max_size)
        throw DataError("exact plan: instance too large for the oracle (lcm(n, m) = " + std::to_string(big) + ")");
    const Index rn = big / n;
    const Index rm = big / m;
    Matrix expanded(big, big);
    for (Index j = 0; j < big; ++j)
        for (Index i = 0; i < big; ++i) expanded(i, j) = cost.values(i / rn, j / rm);
    const auto assign = detail::hungarian(expanded);

    ExactPlan out;
    out.plan.coupling = Matrix::Zero(n, m);
    const double mass = 1.0 / static_cast<double>(big);
    for (Index i = 0; i < big; ++i) out.plan.coupling(i / rn, assign[i] / rm) += mass;
    out.cost = transport_cost(cost, out.plan.coupling);
    out.plan.residual = marginal_residual(out.plan.coupling);
    return out;
}

inline ExactPlan exact_plan_oracle(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    return exact_plan_oracle(cost_matrix(mu, nu));
}

/// Row-normalized plan diag(P 1)^-1 P, equal to n P for an exactly feasible
/// plan. Back-transfers use it so constants are preserved to rounding.
inline Matrix back_operator(const TransportPlan& plan) {
    const Vector r = plan.coupling.rowwise().sum();
    if (!(r.minCoeff() > 0.0)) throw NumericalError("transport plan has an empty row");
    return r.cwiseInverse().asDiagonal() * plan.coupling;
}

/// Signal on the source nodes expressed on the target support:
/// diag(P^T 1)^-1 P^T y, which is (m P)^T y for an exactly feasible plan.
inline Vector transfer_signal(const TransportPlan& plan, const Vector& y) {
    if (y.size() != plan.rows())
        throw DataError("transfer: signal length " + std::to_string(y.size()) + " != plan rows " +
                        std::to_string(plan.rows()));
    const Vector c = plan.coupling.colwise().sum().transpose();
    if (!(c.minCoeff() > 0.0)) throw NumericalError("transport plan has an empty column");
    return (plan.coupling.transpose() * y).cwiseQuotient(c);
}

/// Field on the target support mapped back to the source nodes.
inline Vector back_transfer(const TransportPlan& plan, const Vector& t) {
    if (t.size() != plan.cols())
        throw DataError("back transfer: field length " + std::to_string(t.size()) + " != plan columns " +
                        std::to_string(plan.cols()));
    return back_operator(plan) * t;
}

/// Push a covariance on the target support to the source nodes:
/// B S B^T with B the back-transfer operator.
inline Matrix propagate_covariance(const TransportPlan& plan, const Matrix& cov) {
    if (cov.rows() != plan.cols() || cov.cols() != plan.cols())
        throw DataError("propagate covariance: expected " + std::to_string(plan.cols()) + "x" +
                        std::to_string(plan.cols()) + " covariance");
    const double mag = cov.cwiseAbs().maxCoeff();
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(mag, 1e-300))
        throw DataError("propagate covariance: input is not symmetric");
    const Matrix bp = back_operator(plan);
    return bp * cov * bp.transpose();
}

} // namespace tosgp
