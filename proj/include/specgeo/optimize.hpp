#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "specgeo/error.hpp"
#include "specgeo/matrix.hpp"

namespace specgeo {

enum class OptMethod { lbfgs, gradient_descent };

struct OptimizeOptions {
    OptMethod method = OptMethod::lbfgs;
    int max_iter = 2000;
    double grad_tol = 1e-6;  // on the max-norm of the gradient
    int history = 10;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 60;
    /// First trial step for gradient descent.
    double initial_step = 1.0;
};

struct OptimizeResult {
    Vector x;
    double value = 0.0;
    double grad_max = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Objective after each accepted step, starting with f(x0).
    std::vector<double> trace;
};

namespace detail {

inline double max_norm(const Vector& g) {
    double m = 0.0;
    for (double x : g) m = std::max(m, std::abs(x));
    return m;
}

} // namespace detail

/// Deterministic full-batch minimizer with Armijo backtracking. `f(x, grad)`
/// returns the objective and writes the gradient into `grad`. Every accepted
/// step strictly decreases the objective.
template <class F>
OptimizeResult minimize(F&& f, Vector x0, const OptimizeOptions& opts = {}) {
    const std::size_t n = x0.size();
    OptimizeResult res;
    res.x = std::move(x0);
    Vector g(n, 0.0);
    double fx = f(res.x, g);
    require(std::isfinite(fx), Errc::non_finite, "objective is not finite at the starting point");
    res.trace.push_back(fx);

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    Vector p(n), x_new(n), g_new(n);
    double gd_step = opts.initial_step;

    for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
        res.grad_max = detail::max_norm(g);
        if (res.grad_max <= opts.grad_tol) {
            res.converged = true;
            break;
        }

        double t = 1.0;
        if (opts.method == OptMethod::lbfgs && !s_hist.empty()) {
            // Two-loop recursion.
            Vector q = g;
            std::vector<double> alpha(s_hist.size());
            for (std::size_t i = s_hist.size(); i-- > 0;) {
                alpha[i] = rho_hist[i] * dot(s_hist[i], q);
                for (std::size_t j = 0; j < n; ++j) q[j] -= alpha[i] * y_hist[i][j];
            }
            const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
            for (auto& x : q) x *= gamma;
            for (std::size_t i = 0; i < s_hist.size(); ++i) {
                const double beta = rho_hist[i] * dot(y_hist[i], q);
                for (std::size_t j = 0; j < n; ++j) q[j] += (alpha[i] - beta) * s_hist[i][j];
            }
            for (std::size_t j = 0; j < n; ++j) p[j] = -q[j];
            if (dot(p, g) >= 0.0) {
                for (std::size_t j = 0; j < n; ++j) p[j] = -g[j];
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                t = 1.0 / std::max(1.0, norm(g));
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) p[j] = -g[j];
            t = opts.method == OptMethod::lbfgs ? 1.0 / std::max(1.0, norm(g)) : gd_step;
        }

        const double slope = dot(p, g);
        double f_new = fx;
        bool accepted = false;
        for (int b = 0; b < opts.max_backtracks; ++b) {
            for (std::size_t j = 0; j < n; ++j) x_new[j] = res.x[j] + t * p[j];
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= fx + opts.armijo_c * t * slope && f_new < fx) {
                accepted = true;
                break;
            }
            t *= opts.backtrack;
        }
        if (!accepted) break;  // no decrease representable; leave converged = false

        if (opts.method == OptMethod::lbfgs) {
            Vector s(n), y(n);
            for (std::size_t j = 0; j < n; ++j) {
                s[j] = x_new[j] - res.x[j];
                y[j] = g_new[j] - g[j];
            }
            const double sy = dot(s, y);
            if (sy > 1e-12 * norm(s) * norm(y)) {
                s_hist.push_back(std::move(s));
                y_hist.push_back(std::move(y));
                rho_hist.push_back(1.0 / sy);
                if (static_cast<int>(s_hist.size()) > opts.history) {
                    s_hist.pop_front();
                    y_hist.pop_front();
                    rho_hist.pop_front();
                }
            }
        } else {
            // Let the step grow again after a successful trial.
            gd_step = std::min(opts.initial_step, t * 2.0);
        }
        std::swap(res.x, x_new);
        std::swap(g, g_new);
        fx = f_new;
        res.trace.push_back(fx);
    }
    res.value = fx;
    res.grad_max = detail::max_norm(g);
    if (res.grad_max <= opts.grad_tol) res.converged = true;
    return res;
}

} // namespace specgeo
