#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "specgeo/error.hpp"
#include "specgeo/matrix.hpp"
#include "specgeo/random.hpp"

namespace specgeo {

/// Eigenvalues sorted descending; column i of `vectors` pairs with values[i].
struct EigenSystem {
    Vector values;
    Matrix vectors;

    std::size_t dim() const noexcept { return values.size(); }
    Vector vector(std::size_t i) const { return vectors.col_vector(i); }
    double trace() const noexcept { return std::accumulate(values.begin(), values.end(), 0.0); }

    /// Coefficients U^T v.
    Vector project(std::span<const double> v) const {
        require(v.size() == dim(), Errc::dimension_mismatch, "vector and eigenbasis dimensions differ");
        return matvec_t(vectors, v);
    }

    Matrix reconstruct() const {
        const std::size_t d = dim();
        Matrix scaled_u = vectors;
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) scaled_u(r, c) *= values[c];
        Matrix out(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) {
                out(i, j) = dot(scaled_u.row(i), vectors.row(j));
                out(j, i) = out(i, j);
            }
        return out;
    }

    /// Smallest gap between consecutive eigenvalues.
    double min_gap() const noexcept {
        double g = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < values.size(); ++i) g = std::min(g, values[i] - values[i + 1]);
        return g;
    }
};

/// Orthogonal d x d matrix plus the numerical rank of the problem it solved.
struct Rotation {
    Matrix q;
    std::size_t rank = 0;

    std::size_t dim() const noexcept { return q.rows(); }
    bool rank_deficient() const noexcept { return rank < q.rows(); }
};

namespace detail {

// Flip each column so its largest-magnitude entry is positive (first index
// wins on exact magnitude ties).
inline void normalize_column_signs(Matrix& u) {
    for (std::size_t c = 0; c < u.cols(); ++c) {
        std::size_t best = 0;
        double best_abs = -1.0;
        for (std::size_t r = 0; r < u.rows(); ++r) {
            const double a = std::abs(u(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (u(best, c) < 0.0)
            for (std::size_t r = 0; r < u.rows(); ++r) u(r, c) = -u(r, c);
    }
}

// Householder reduction of a symmetric matrix to tridiagonal form. On exit
// `v` holds the accumulated orthogonal transform, `d` the diagonal and `e`
// the subdiagonal (e[0] unused).
inline void tridiagonalize(std::vector<std::vector<double>>& v, Vector& d, Vector& e) {
    const std::size_t n = d.size();
    for (std::size_t j = 0; j < n; ++j) d[j] = v[n - 1][j];

    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0;
        double h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for (std::size_t k = j + 1; k <= i - 1; ++k) {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (std::size_t k = j; k <= i - 1; ++k) v[k][j] -= (f * e[k] + g * d[k]);
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for (std::size_t i = 0; i + 1 < n; ++i) {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (std::size_t k = 0; k <= i; ++k) d[k] = v[k][i + 1] / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += v[k][i + 1] * v[k][j];
                for (std::size_t k = 0; k <= i; ++k) v[k][j] -= g * d[k];
            }
        }
        for (std::size_t k = 0; k <= i; ++k) v[k][i + 1] = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit-shift QL on the tridiagonal (d, e), rotating the columns of v.
inline void tridiagonal_ql(std::vector<std::vector<double>>& v, Vector& d, Vector& e, int max_iter_per_value) {
    const std::size_t n = d.size();
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0;
    double tst1 = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n) {
            if (std::abs(e[m]) <= eps * tst1) break;
            ++m;
        }
        if (m == n) m = n - 1;
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > max_iter_per_value) fail(Errc::no_convergence, "symmetric QL iteration did not converge");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = 1.0, c3 = 1.0;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    const std::size_t i = ii;
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for (std::size_t k = 0; k < n; ++k) {
                        h = v[k][i + 1];
                        v[k][i + 1] = s * v[k][i] + c * h;
                        v[k][i] = c * v[k][i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

} // namespace detail

struct EigOptions {
    double symmetry_tol = 1e-10;
    int max_iter_per_value = 64;
};

/// Full eigendecomposition of a symmetric matrix: Householder
/// tridiagonalization followed by implicit-shift QL. Eigenvalues come back
/// descending and every eigenvector has its largest-magnitude entry positive.
inline EigenSystem eig_sym(const Matrix& a, const EigOptions& opts = {}) {
    require(a.square() && a.rows() >= 1, Errc::invalid_shape, "eig_sym needs a non-empty square matrix");
    require(all_finite(a.data()), Errc::non_finite, "eig_sym input contains NaN or Inf");
    const std::size_t n = a.rows();
    const double scale = max_abs(a);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > opts.symmetry_tol * scale)
                fail(Errc::not_symmetric, "eig_sym input is not symmetric");

    std::vector<std::vector<double>> v(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i][j] = 0.5 * (a(i, j) + a(j, i));
    Vector d(n), e(n);
    detail::tridiagonalize(v, d, e);
    detail::tridiagonal_ql(v, d, e, opts.max_iter_per_value);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return d[x] > d[y]; });

    EigenSystem es;
    es.values.resize(n);
    es.vectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        es.values[c] = d[order[c]];
        for (std::size_t r = 0; r < n; ++r) es.vectors(r, c) = v[r][order[c]];
    }
    detail::normalize_column_signs(es.vectors);
    return es;
}

/// Thin SVD A = U diag(s) V^T for rows >= cols; singular values descending.
struct Svd {
    Matrix u;  // rows x cols
    Vector s;
    Matrix v;  // cols x cols
};

/// One-sided (Hestenes) Jacobi SVD. Columns whose singular value is
/// numerically zero get deterministic orthonormal completions in U.
inline Svd svd_jacobi(const Matrix& a, int max_sweeps = 80) {
    require(a.rows() >= a.cols() && a.cols() >= 1, Errc::invalid_shape, "svd_jacobi needs rows >= cols >= 1");
    require(all_finite(a.data()), Errc::non_finite, "svd input contains NaN or Inf");
    const std::size_t m = a.rows(), n = a.cols();
    // Work on columns stored contiguously.
    std::vector<Vector> cols(n, Vector(m));
    std::vector<Vector> vcols(n, Vector(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) cols[j][i] = a(i, j);
        vcols[j][j] = 1.0;
    }
    const double eps = std::numeric_limits<double>::epsilon();
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(cols[p], cols[p]);
                const double beta = dot(cols[q], cols[q]);
                const double gamma = dot(cols[p], cols[q]);
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                auto rotate = [c, s](Vector& x, Vector& y) {
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        const double xi = x[i], yi = y[i];
                        x[i] = c * xi - s * yi;
                        y[i] = s * xi + c * yi;
                    }
                };
                rotate(cols[p], cols[q]);
                rotate(vcols[p], vcols[q]);
            }
        }
    }
    if (!converged) fail(Errc::no_convergence, "Jacobi SVD did not converge");

    Vector sv(n);
    for (std::size_t j = 0; j < n; ++j) sv[j] = norm(cols[j]);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

    Svd out;
    out.s.resize(n);
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    const double smax = sv[order[0]];
    const double zero_tol = std::max<double>(m, n) * eps * smax;
    std::vector<Vector> ucols;
    std::vector<std::size_t> null_slots;
    ucols.reserve(n);
    for (std::size_t c = 0; c < n; ++c) {
        const std::size_t j = order[c];
        out.s[c] = sv[j];
        for (std::size_t i = 0; i < n; ++i) out.v(i, c) = vcols[j][i];
        if (sv[j] > zero_tol && sv[j] > 0.0) {
            ucols.push_back(scaled(cols[j], 1.0 / sv[j]));
        } else {
            ucols.emplace_back();
            null_slots.push_back(c);
        }
    }
    // Complete U against the standard basis, Gram-Schmidt applied twice.
    std::size_t next_basis = 0;
    for (std::size_t slot : null_slots) {
        for (; next_basis < m; ++next_basis) {
            Vector cand(m, 0.0);
            cand[next_basis] = 1.0;
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t c = 0; c < n; ++c) {
                    if (ucols[c].empty()) continue;
                    const double proj = dot(ucols[c], cand);
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * ucols[c][i];
                }
            const double nc = norm(cand);
            if (nc > 0.5) {
                ucols[slot] = scaled(cand, 1.0 / nc);
                ++next_basis;
                break;
            }
        }
    }
    for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < m; ++i) out.u(i, c) = ucols[c][i];
    return out;
}

/// Orthogonal Q minimizing ||X_src - X_tgt Q||_F, via the SVD
/// X_tgt^T X_src = U S V^T with Q = U V^T. When the cross-product is rank
/// deficient the minimizer is not unique; the SVD completion fixes one.
inline Rotation procrustes(const Matrix& x_src, const Matrix& x_tgt) {
    require(x_src.rows() >= 1, Errc::invalid_argument, "procrustes needs at least one anchor row");
    require(x_src.rows() == x_tgt.rows() && x_src.cols() == x_tgt.cols(), Errc::dimension_mismatch,
            "procrustes anchor matrices differ in shape");
    require(all_finite(x_src.data()) && all_finite(x_tgt.data()), Errc::non_finite,
            "procrustes input contains NaN or Inf");
    const Matrix m = matmul_tn(x_tgt, x_src);
    const std::size_t d = m.rows();
    Rotation rot;
    if (max_abs(m) == 0.0) {
        rot.q = Matrix::identity(d);
        rot.rank = 0;
        return rot;
    }
    const Svd svd = svd_jacobi(m);
    rot.q = matmul(svd.u, svd.v.transposed());
    const double tol = static_cast<double>(d) * std::numeric_limits<double>::epsilon() * svd.s[0];
    rot.rank = static_cast<std::size_t>(std::count_if(svd.s.begin(), svd.s.end(), [tol](double s) { return s > tol; }));
    return rot;
}

struct PowerOptions {
    /// Relative cutoff below which eigenvalues count as singular for p < 0.
    double relative_cutoff = 1e-12;
    /// When set, eigenvalues are clamped up to this floor instead of failing.
    std::optional<double> floor;
};

/// U diag(lambda_i^p) U^T from a precomputed eigensystem.
inline Matrix mat_power_sym(const EigenSystem& es, double p, const PowerOptions& opts = {}) {
    const std::size_t d = es.dim();
    require(d >= 1, Errc::invalid_argument, "empty eigensystem");
    const double lmax = *std::max_element(es.values.begin(), es.values.end());
    const double lmag = std::max(std::abs(lmax), std::abs(es.values.back()));
    const bool integer_p = std::floor(p) == p;
    Vector powered(d);
    for (std::size_t i = 0; i < d; ++i) {
        double lam = es.values[i];
        if (opts.floor) lam = std::max(lam, *opts.floor);
        if (p < 0.0) {
            if (!(lam > 0.0) || (!opts.floor && lam < opts.relative_cutoff * lmax))
                fail(Errc::singular, "eigenvalue too small for a negative matrix power");
        } else if (!integer_p && lam < 0.0) {
            if (lam < -opts.relative_cutoff * lmag) fail(Errc::singular, "negative eigenvalue for a fractional power");
            lam = 0.0;
        }
        powered[i] = p == 0.0 ? 1.0 : std::pow(lam, p);
    }
    Matrix scaled_u = es.vectors;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) scaled_u(r, c) *= powered[c];
    Matrix out(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            out(i, j) = dot(scaled_u.row(i), es.vectors.row(j));
            out(j, i) = out(i, j);
        }
    return out;
}

inline Matrix mat_power_sym(const Matrix& a, double p, const PowerOptions& opts = {}) {
    return mat_power_sym(eig_sym(a), p, opts);
}

/// Householder QR of a square matrix. Returns Q and the diagonal of R.
struct QrResult {
    Matrix q;
    Vector r_diag;
};

inline QrResult householder_qr(Matrix a) {
    require(a.square(), Errc::invalid_shape, "householder_qr expects a square matrix");
    const std::size_t n = a.rows();
    std::vector<Vector> reflectors(n);
    Vector r_diag(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        Vector x(n - j);
        for (std::size_t i = j; i < n; ++i) x[i - j] = a(i, j);
        const double xn = norm(x);
        if (xn == 0.0) continue;
        const double alpha = x[0] > 0.0 ? -xn : xn;
        x[0] -= alpha;
        const double vn = norm(x);
        if (vn == 0.0) {
            r_diag[j] = alpha;
            continue;
        }
        for (auto& xi : x) xi /= vn;
        for (std::size_t c = j; c < n; ++c) {
            double s = 0.0;
            for (std::size_t i = j; i < n; ++i) s += x[i - j] * a(i, c);
            s *= 2.0;
            for (std::size_t i = j; i < n; ++i) a(i, c) -= s * x[i - j];
        }
        r_diag[j] = a(j, j);
        reflectors[j] = std::move(x);
    }
    // Q = H_0 H_1 ... H_{n-1}, applied to the identity from the right end.
    Matrix q = Matrix::identity(n);
    for (std::size_t jj = n; jj-- > 0;) {
        const Vector& v = reflectors[jj];
        if (v.empty()) continue;
        for (std::size_t c = 0; c < n; ++c) {
            double s = 0.0;
            for (std::size_t i = jj; i < n; ++i) s += v[i - jj] * q(i, c);
            s *= 2.0;
            for (std::size_t i = jj; i < n; ++i) q(i, c) -= s * v[i - jj];
        }
    }
    return {std::move(q), std::move(r_diag)};
}

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian d x d matrix
/// (row-major fill from one stream seeded with `seed`), with column j of Q
/// multiplied by sign(R_jj) (sign(0) taken as +1).
inline Rotation haar_orthogonal(std::size_t d, std::uint64_t seed) {
    require(d >= 1, Errc::invalid_argument, "haar_orthogonal needs d >= 1");
    Rng rng(seed);
    Matrix g(d, d);
    for (auto& x : g.data()) x = rng.normal();
    QrResult qr = householder_qr(std::move(g));
    for (std::size_t c = 0; c < d; ++c)
        if (qr.r_diag[c] < 0.0)
            for (std::size_t r = 0; r < d; ++r) qr.q(r, c) = -qr.q(r, c);
    return {std::move(qr.q), d};
}

/// U diag(values) U^T for an orthogonal U.
inline Matrix compose_spectrum(const Matrix& u, std::span<const double> values) {
    const std::size_t d = u.rows();
    Matrix scaled_u = u;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) scaled_u(r, c) *= values[c];
    Matrix out(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            out(i, j) = dot(scaled_u.row(i), u.row(j));
            out(j, i) = out(i, j);
        }
    return out;
}

} // namespace specgeo
