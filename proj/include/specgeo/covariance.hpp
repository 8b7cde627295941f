#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "specgeo/error.hpp"
#include "specgeo/linalg.hpp"
#include "specgeo/matrix.hpp"

namespace specgeo {

inline constexpr double kDefaultLambda = 0.1;

/// Regularized second moment of a token subset together with its eigensystem.
struct LanguageCovariance {
    Matrix sigma;
    double lambda_reg = 0.0;
    std::vector<std::int64_t> token_subset;
    EigenSystem eig;

    std::size_t dim() const noexcept { return sigma.rows(); }
};

struct SigmaOptions {
    /// Subtract the row mean before forming the second moment.
    bool centered = false;
    /// Per-row weights (normalized internally). Empty means uniform.
    std::vector<double> weights;
};

/// sigma = (1/n) sum_i g_i g_i^T + lambda I over the rows of `rows`.
inline LanguageCovariance build_sigma(const Matrix& rows, double lambda_reg, const SigmaOptions& opts = {}) {
    require(rows.rows() >= 1 && rows.cols() >= 1, Errc::invalid_argument, "build_sigma needs at least one row");
    require(lambda_reg >= 0.0 && std::isfinite(lambda_reg), Errc::invalid_argument, "lambda must be finite and >= 0");
    require(all_finite(rows.data()), Errc::non_finite, "covariance rows contain NaN or Inf");
    const std::size_t n = rows.rows(), d = rows.cols();

    Vector w(n, 1.0 / static_cast<double>(n));
    if (!opts.weights.empty()) {
        require(opts.weights.size() == n, Errc::dimension_mismatch, "weight count differs from row count");
        double total = 0.0;
        for (double x : opts.weights) {
            require(x >= 0.0 && std::isfinite(x), Errc::invalid_argument, "weights must be finite and >= 0");
            total += x;
        }
        require(total > 0.0, Errc::invalid_argument, "weights sum to zero");
        for (std::size_t i = 0; i < n; ++i) w[i] = opts.weights[i] / total;
    }

    Matrix x = rows;
    if (opts.centered) {
        Vector mean(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) mean[j] += w[i] * x(i, j);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) x(i, j) -= mean[j];
    }

    Matrix s(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = x.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            const double wa = w[i] * r[a];
            if (wa == 0.0) continue;
            for (std::size_t b = a; b < d; ++b) s(a, b) += wa * r[b];
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        s(a, a) += lambda_reg;
        for (std::size_t b = a + 1; b < d; ++b) s(b, a) = s(a, b);
    }

    LanguageCovariance cov;
    cov.eig = eig_sym(s);
    cov.sigma = std::move(s);
    cov.lambda_reg = lambda_reg;
    return cov;
}

/// Regularized second moment over the unembedding rows listed in `subset`.
inline LanguageCovariance build_sigma(const Matrix& w_u, std::span<const std::int64_t> subset, double lambda_reg,
                                      const SigmaOptions& opts = {}) {
    require(!subset.empty(), Errc::invalid_argument, "token subset is empty");
    std::vector<std::size_t> idx;
    idx.reserve(subset.size());
    for (auto id : subset) {
        require(id >= 0 && static_cast<std::size_t>(id) < w_u.rows(), Errc::invalid_argument, "token id out of range");
        idx.push_back(static_cast<std::size_t>(id));
    }
    auto cov = build_sigma(w_u.select_rows(idx), lambda_reg, opts);
    cov.token_subset.assign(subset.begin(), subset.end());
    return cov;
}

/// Covariance with a given spectrum in a given orthonormal basis. When the
/// values are already descending the eigensystem is taken verbatim, so the
/// spectrum is carried over exactly.
inline LanguageCovariance covariance_from_spectrum(std::span<const double> values, const Matrix& basis,
                                                   double lambda_reg = 0.0) {
    require(basis.square() && basis.rows() == values.size(), Errc::dimension_mismatch,
            "spectrum length and basis size differ");
    LanguageCovariance cov;
    cov.sigma = compose_spectrum(basis, values);
    if (std::is_sorted(values.begin(), values.end(), std::greater<>{}))
        cov.eig = EigenSystem{Vector(values.begin(), values.end()), basis};
    else
        cov.eig = eig_sym(cov.sigma);
    cov.lambda_reg = lambda_reg;
    return cov;
}

/// Wrap an existing covariance matrix (for example one loaded from disk).
inline LanguageCovariance covariance_from_matrix(Matrix sigma, double lambda_reg = 0.0) {
    require(sigma.square() && sigma.rows() >= 1, Errc::invalid_shape, "covariance must be a non-empty square matrix");
    LanguageCovariance cov;
    cov.eig = eig_sym(sigma);
    cov.sigma = std::move(sigma);
    cov.lambda_reg = lambda_reg;
    return cov;
}

inline double condition_number(const EigenSystem& es) {
    require(es.dim() >= 1, Errc::invalid_argument, "empty eigensystem");
    const double lmin = es.values.back();
    if (!(lmin > 0.0)) fail(Errc::singular, "minimum eigenvalue is not positive");
    return es.values.front() / lmin;
}

inline double condition_number(const LanguageCovariance& cov) { return condition_number(cov.eig); }

} // namespace specgeo
