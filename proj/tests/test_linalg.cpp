#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "specgeo/linalg.hpp"
#include "test_helpers.hpp"

using namespace specgeo;
using specgeo::testing::random_matrix;
using specgeo::testing::random_spd;
using specgeo::testing::random_symmetric;

namespace {

double residual(const Matrix& x_src, const Matrix& x_tgt, const Matrix& q) {
    const Matrix xq = matmul(x_tgt, q);
    double s = 0.0;
    for (std::size_t i = 0; i < xq.size(); ++i) {
        const double r = x_src.data()[i] - xq.data()[i];
        s += r * r;
    }
    return std::sqrt(s);
}

} // namespace

TEST_CASE("eig_sym on identity and diagonal matrices", "[linalg][eig]") {
    const auto id = eig_sym(Matrix::identity(3));
    for (double v : id.values) CHECK(v == Catch::Approx(1.0).margin(1e-15));
    CHECK(orthogonality_error(id.vectors) <= 1e-14);

    const auto es = eig_sym(Matrix{{1.0, 0.0}, {0.0, 3.0}});
    REQUIRE(es.values.size() == 2);
    CHECK(es.values[0] == 3.0);
    CHECK(es.values[1] == 1.0);
    CHECK(es.vectors(1, 0) == 1.0);
    CHECK(es.vectors(0, 0) == 0.0);
    CHECK(es.vectors(0, 1) == 1.0);

    const auto es2 = eig_sym(Matrix{{3.0, 0.0}, {0.0, 1.0}});
    CHECK(es2.vector(0) == Vector{1.0, 0.0});
    CHECK(es2.vector(1) == Vector{0.0, 1.0});
}

TEST_CASE("eig_sym reconstructs random symmetric matrices", "[linalg][eig]") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const std::size_t d = 1 + seed % 24;
        const Matrix a = random_symmetric(d, seed);
        const auto es = eig_sym(a);
        CHECK(max_abs_diff(es.reconstruct(), a) <= 1e-10);
        CHECK(orthogonality_error(es.vectors) <= 1e-10);
        for (std::size_t i = 0; i + 1 < d; ++i) CHECK(es.values[i] >= es.values[i + 1]);
        CHECK(std::abs(es.trace() - trace(a)) <= 1e-8 * std::max(1.0, std::abs(trace(a))) + 1e-12);
        for (std::size_t c = 0; c < d; ++c) {
            double best = 0.0;
            for (std::size_t r = 0; r < d; ++r)
                if (std::abs(es.vectors(r, c)) > std::abs(best)) best = es.vectors(r, c);
            CHECK(best > 0.0);
        }
    }
}

TEST_CASE("eig_sym handles repeated eigenvalues and is deterministic", "[linalg][eig]") {
    // Projector with a 3-fold degenerate eigenvalue.
    Matrix q = haar_orthogonal(5, 9).q;
    const Matrix a = compose_spectrum(q, Vector{2.0, 2.0, 2.0, -1.0, 0.0});
    const auto es = eig_sym(a);
    CHECK(max_abs_diff(es.reconstruct(), a) <= 1e-12);
    CHECK(es.values[0] == Catch::Approx(2.0).margin(1e-12));
    CHECK(es.values[4] == Catch::Approx(-1.0).margin(1e-12));
    const auto again = eig_sym(a);
    CHECK(again.values == es.values);
    CHECK(again.vectors == es.vectors);
}

TEST_CASE("eig_sym rejects bad input", "[linalg][eig]") {
    CHECK_THROWS_AS(eig_sym(Matrix{{1.0, 2.0}, {0.0, 1.0}}), Error);
    try {
        eig_sym(Matrix{{1.0, 2.0}, {0.0, 1.0}});
    } catch (const Error& e) {
        CHECK(e.code() == Errc::not_symmetric);
    }
    try {
        eig_sym(Matrix{{1.0, NAN}, {NAN, 1.0}});
        FAIL("expected non-finite error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::non_finite);
    }
    CHECK_THROWS_AS(eig_sym(Matrix(2, 3)), Error);
}

TEST_CASE("svd_jacobi reconstructs rectangular matrices", "[linalg][svd]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix a = random_matrix(9, 5, 100 + seed);
        const Svd s = svd_jacobi(a);
        Matrix us = s.u;
        for (std::size_t r = 0; r < us.rows(); ++r)
            for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= s.s[c];
        CHECK(max_abs_diff(matmul(us, s.v.transposed()), a) <= 1e-12);
        CHECK(orthogonality_error(s.u) <= 1e-12);
        CHECK(orthogonality_error(s.v) <= 1e-12);
        for (std::size_t i = 0; i + 1 < s.s.size(); ++i) CHECK(s.s[i] >= s.s[i + 1]);
    }
}

TEST_CASE("procrustes recovers planted rotations", "[linalg][procrustes]") {
    const Matrix x = random_matrix(40, 6, 5);
    const Rotation same = procrustes(x, x);
    CHECK(max_abs_diff(same.q, Matrix::identity(6)) <= 1e-8);
    CHECK(same.rank == 6);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix r = haar_orthogonal(6, 1000 + seed).q;
        // X_tgt = X_src R^{-1} = X_src R^T, so X_tgt R = X_src.
        const Matrix x_tgt = matmul(x, r.transposed());
        const Rotation q = procrustes(x, x_tgt);
        CHECK(max_abs_diff(q.q, r) <= 1e-8);
    }
}

TEST_CASE("procrustes on rank-deficient anchors is deterministic and optimal", "[linalg][procrustes]") {
    const Matrix x_src{{1.0, 2.0}};
    const Matrix x_tgt{{-0.5, 3.0}};
    const Rotation q = procrustes(x_src, x_tgt);
    CHECK(q.rank == 1);
    CHECK(q.rank_deficient());
    CHECK(orthogonality_error(q.q) <= 1e-12);
    const Rotation again = procrustes(x_src, x_tgt);
    CHECK(again.q == q.q);

    const double best = residual(x_src, x_tgt, q.q);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Matrix other = haar_orthogonal(2, 7000 + seed).q;
        CHECK(residual(x_src, x_tgt, other) >= best - 1e-9);
    }
}

TEST_CASE("procrustes residual is minimal against sampled rotations", "[linalg][procrustes]") {
    const Matrix a = random_matrix(12, 4, 77);
    const Matrix b = random_matrix(12, 4, 78);
    const Rotation q = procrustes(a, b);
    const double best = residual(a, b, q.q);
    for (std::uint64_t seed = 0; seed < 300; ++seed)
        CHECK(residual(a, b, haar_orthogonal(4, seed).q) >= best - 1e-9);
}

TEST_CASE("procrustes validates shapes", "[linalg][procrustes]") {
    CHECK_THROWS_AS(procrustes(Matrix(3, 2), Matrix(3, 3)), Error);
    CHECK_THROWS_AS(procrustes(Matrix(3, 2), Matrix(2, 2)), Error);
}

TEST_CASE("mat_power_sym examples", "[linalg][power]") {
    const Matrix p = mat_power_sym(Matrix{{4.0, 0.0}, {0.0, 1.0}}, -0.5);
    CHECK(max_abs_diff(p, Matrix{{0.5, 0.0}, {0.0, 1.0}}) <= 1e-15);

    for (double e : {-0.5, 0.5, 2.0, -3.0, 0.0})
        CHECK(max_abs_diff(mat_power_sym(Matrix::identity(4), e), Matrix::identity(4)) <= 1e-14);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix a = random_spd(6, 300 + seed);
        const Matrix root = mat_power_sym(a, 0.5);
        CHECK(max_abs_diff(matmul(root, root), a) <= 1e-9);
        const Matrix inv_root = mat_power_sym(a, -0.5);
        CHECK(max_abs_diff(matmul(matmul(inv_root, a), inv_root), Matrix::identity(6)) <= 1e-9);
    }
}

TEST_CASE("mat_power_sym guards against singular spectra", "[linalg][power]") {
    const Matrix singular{{1.0, 0.0}, {0.0, 0.0}};
    try {
        mat_power_sym(singular, -0.5);
        FAIL("expected singular error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::singular);
        CHECK(e.numerical());
    }
    const Matrix tiny{{1.0, 0.0}, {0.0, 1e-14}};
    CHECK_THROWS_AS(mat_power_sym(tiny, -1.0), Error);
    PowerOptions floor;
    floor.floor = 1e-14;
    CHECK(mat_power_sym(tiny, -1.0, floor)(1, 1) == Catch::Approx(1e14));
    CHECK_THROWS_AS(mat_power_sym(Matrix{{-1.0, 0.0}, {0.0, 1.0}}, 0.5), Error);
    CHECK(mat_power_sym(Matrix{{-1.0, 0.0}, {0.0, 2.0}}, 2.0)(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("haar_orthogonal basics", "[linalg][haar]") {
    for (std::size_t d : {1u, 2u, 5u, 17u, 64u}) {
        const Rotation r = haar_orthogonal(d, 42 + d);
        CHECK(orthogonality_error(r.q) <= 1e-10);
        CHECK(haar_orthogonal(d, 42 + d).q == r.q);
    }
    std::set<double> signs;
    for (std::uint64_t seed = 0; seed < 50; ++seed) signs.insert(haar_orthogonal(1, seed).q(0, 0));
    CHECK(signs == std::set<double>{-1.0, 1.0});
    CHECK_THROWS_AS(haar_orthogonal(0, 1), Error);
}

TEST_CASE("haar_orthogonal first-entry second moment is 1/d", "[linalg][haar]") {
    // Q00^2 ~ Beta(1/2, (d-1)/2) under Haar measure, mean 1/d.
    const int n = 10000;
    double sum = 0.0;
    for (int s = 0; s < n; ++s) {
        const double q = haar_orthogonal(4, derive_seed(2024, s)).q(0, 0);
        sum += q * q;
    }
    CHECK(sum / n == Catch::Approx(0.25).margin(0.01));
}

TEST_CASE("rng streams are reproducible and well behaved", "[random]") {
    Rng a(7), b(7), c(8);
    for (int i = 0; i < 10; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        CHECK(x != c.next());
    }
    Rng g(11);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = g.normal();
        s += z;
        s2 += z * z;
    }
    CHECK(s / n == Catch::Approx(0.0).margin(0.01));
    CHECK(s2 / n == Catch::Approx(1.0).margin(0.01));

    Rng u(3);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) ++counts[u.below(5)];
    for (int c5 : counts) CHECK(std::abs(c5 - 10000) < 400);
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}
