#pragma once

#include "tosgp/error.hpp"
#include "tosgp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

namespace tosgp {

struct LbfgsOptions {
    int max_iter = 200;
    int history = 10;
    double gtol = 1e-6;
    double ftol = 1e-12;
};

struct LbfgsResult {
    Vector x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

/// Objective: returns f(x) and writes the gradient. May throw NumericalError,
/// which the line search treats as an infinite value.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

/// Box-constrained L-BFGS: two-loop recursion for the direction, components
/// pushing against an active bound are dropped, Armijo backtracking along the
/// projected path.
inline LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, const Vector& lower, const Vector& upper,
                                  const LbfgsOptions& opts = {}) {
    auto project = [&](Vector x) { return x.cwiseMax(lower).cwiseMin(upper); };
    auto safe_eval = [&](const Vector& x, Vector& g) {
        try {
            const double v = f(x, g);
            return std::isfinite(v) && g.allFinite() ? v : std::numeric_limits<double>::infinity();
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    LbfgsResult res;
    Vector x = project(std::move(x0));
    Vector g(x.size());
    double fx = safe_eval(x, g);
    if (!std::isfinite(fx)) throw NumericalError("optimizer: objective not finite at the starting point");

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    int small_steps = 0;

    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        const Vector pg = x - project(x - g);
        if (pg.lpNorm<Eigen::Infinity>() < opts.gtol) {
            res.converged = true;
            break;
        }

        auto direction = [&](bool use_memory) {
            Vector q = g;
            std::vector<double> alpha(s_hist.size());
            if (use_memory) {
                for (std::size_t k = s_hist.size(); k-- > 0;) {
                    alpha[k] = rho_hist[k] * s_hist[k].dot(q);
                    q -= alpha[k] * y_hist[k];
                }
                if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
                for (std::size_t k = 0; k < s_hist.size(); ++k) {
                    const double beta = rho_hist[k] * y_hist[k].dot(q);
                    q += (alpha[k] - beta) * s_hist[k];
                }
            }
            Vector d = -q;
            for (Index i = 0; i < d.size(); ++i)
                if ((x(i) <= lower(i) && d(i) < 0.0) || (x(i) >= upper(i) && d(i) > 0.0)) d(i) = 0.0;
            return d;
        };

        Vector d = direction(true);
        if (d.dot(g) >= 0.0 || !d.allFinite()) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = direction(false);
        }
        if (d.lpNorm<Eigen::Infinity>() == 0.0) {
            res.converged = true;
            break;
        }

        double t = s_hist.empty() ? std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>()) : 1.0;
        Vector x_new, g_new(x.size());
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
            x_new = project(x + t * d);
            f_new = safe_eval(x_new, g_new);
            if (f_new <= fx + 1e-4 * g.dot(x_new - x)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;

        const Vector s = x_new - x;
        const Vector yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        const double decrease = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        small_steps = decrease <= opts.ftol * std::max(1.0, std::abs(fx)) ? small_steps + 1 : 0;
        if (small_steps >= 3) {
            res.converged = true;
            break;
        }
    }
    res.x = x;
    res.value = fx;
    return res;
}

} // namespace tosgp
