#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "specgeo/covariance.hpp"
#include "specgeo/format.hpp"
#include "specgeo/spectral.hpp"
#include "test_helpers.hpp"

using namespace specgeo;

namespace {

EigenSystem diag_eig(const Vector& values) {
    const auto cov = covariance_from_spectrum(values, Matrix::identity(values.size()));
    return cov.eig;
}

// Independent trapezoid oracle over explicit (V, C) points.
double trapezoid_gini(const std::vector<double>& v, const std::vector<double>& c) {
    double area = 0.0, pv = 0.0, pc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        area += (v[i] - pv) * (c[i] + pc) / 2.0;
        pv = v[i];
        pc = c[i];
    }
    return area - 0.5;
}

} // namespace

TEST_CASE("two-dimensional worked examples", "[spectral]") {
    const auto eig = diag_eig({3.0, 1.0});
    const auto top = spectral_profile(Vector{1.0, 0.0}, eig);
    CHECK(std::abs(top.gini - 0.125) <= 1e-12);
    CHECK(std::abs(top.scm - 0.75) <= 1e-12);
    const auto bottom = spectral_profile(Vector{0.0, 1.0}, eig);
    CHECK(std::abs(bottom.gini + 0.375) <= 1e-12);
    CHECK(bottom.scm == 1.0);
    CHECK(bottom.cum_variance == Vector{0.75, 1.0});
    CHECK(bottom.cum_energy == Vector{0.0, 1.0});

    const auto mixed = spectral_profile(Vector{1.0, 1.0}, eig);
    CHECK(mixed.gini == Catch::Approx(trapezoid_gini({0.75, 1.0}, {0.5, 1.0})).margin(1e-15));
    CHECK(mixed.scm == 0.75);
}

TEST_CASE("energy proportional to eigenvalues has zero gini", "[spectral]") {
    const Vector values{8.0, 4.0, 2.0, 1.0, 0.5};
    const auto eig = diag_eig(values);
    Vector v(values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(values[i]);
    CHECK(std::abs(spectral_profile(v, eig).gini) <= 1e-12);
}

TEST_CASE("profile invariants on random vectors", "[spectral]") {
    const Matrix a = testing::random_spd(12, 3);
    const auto cov = covariance_from_matrix(a);
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        const Vector v = rng.normal_vector(12);
        const auto p = spectral_profile(v, cov.eig);
        double s = 0.0;
        for (double e : p.energies) s += e;
        CHECK(std::abs(s - 1.0) <= 1e-12);
        for (std::size_t i = 1; i < 12; ++i) CHECK(p.cum_energy[i] >= p.cum_energy[i - 1]);
        CHECK(p.gini >= -0.5);
        CHECK(p.gini <= 0.5);
        CHECK(p.scm > 0.0);
        CHECK(p.scm <= 1.0);
        // Scale invariance.
        const auto q = spectral_profile(scaled(v, 7.5), cov.eig);
        CHECK(std::abs(q.gini - p.gini) <= 1e-12);
    }
}

TEST_CASE("zero and non-finite vectors are rejected", "[spectral]") {
    const auto eig = diag_eig({2.0, 1.0});
    try {
        spectral_profile(Vector{0.0, 0.0}, eig);
        FAIL("expected zero_vector");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::zero_vector);
    }
    CHECK_THROWS_AS(spectral_profile(Vector{NAN, 1.0}, eig), Error);
    CHECK_THROWS_AS(spectral_profile(Vector{1.0}, eig), Error);
}

TEST_CASE("degenerate spectra are flagged", "[spectral]") {
    CHECK(spectral_profile(Vector{1.0, 1.0, 0.0}, diag_eig({2.0, 2.0, 1.0})).degenerate);
    CHECK_FALSE(spectral_profile(Vector{1.0, 1.0, 0.0}, diag_eig({3.0, 2.0, 1.0})).degenerate);
}

TEST_CASE("partition sizes", "[spectral]") {
    CHECK(partition_k(2304, 0.1) == 230);
    CHECK(partition_k(230, 0.1) == 23);
    CHECK(partition_k(64, 0.1) == 6);
    CHECK(partition_k(10, 0.5) == 5);
    CHECK_THROWS_AS(partition_k(10, 0.6), Error);
    CHECK_THROWS_AS(partition_indices(5, 0.1), Error);
    const auto p = partition_indices(10, 0.2);
    CHECK(p.top == std::vector<std::size_t>{0, 1});
    CHECK(p.bottom == std::vector<std::size_t>{8, 9});
    CHECK(p.middle.size() == 6);
}

TEST_CASE("split components reassemble the vector", "[spectral]") {
    const auto cov = covariance_from_matrix(testing::random_spd(20, 5));
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const Vector v = rng.normal_vector(20);
        const auto s = split_vector(v, cov.eig, 0.1);
        CHECK(s.k == 2);
        CHECK(max_abs_diff(add(add(s.top, s.middle), s.bottom), v) <= 1e-12);
        CHECK(std::abs(dot(s.top, s.bottom)) <= 1e-12);
        CHECK(std::abs(s.energy_fractions[0] + s.energy_fractions[1] + s.energy_fractions[2] - 1.0) <= 1e-12);
        const double nv = dot(v, v);
        CHECK(std::abs(dot(s.top, s.top) / nv - s.energy_fractions[0]) <= 1e-12);
        CHECK(std::abs(dot(s.bottom, s.bottom) / nv - s.energy_fractions[2]) <= 1e-12);
    }
    const auto z = split_vector(Vector(20, 0.0), cov.eig, 0.1);
    CHECK(z.zero_energy);
    CHECK(norm(z.top) == 0.0);
}

TEST_CASE("random baselines and scm gap", "[spectral]") {
    const auto eig = diag_eig({4.0, 3.0, 2.0, 1.0});
    const auto a = random_baseline_profiles(eig, 50, 7);
    const auto b = random_baseline_profiles(eig, 50, 7);
    REQUIRE(a.size() == 50);
    for (std::size_t i = 0; i < 50; ++i) CHECK(a[i].gini == b[i].gini);
    const std::vector<SpectralProfile> tail{spectral_profile(Vector{0.0, 0.0, 0.0, 1.0}, eig)};
    CHECK(scm_gap(tail, a) == Catch::Approx(1.0 - mean_scm(a)));
    CHECK(mean_gini(tail) == Catch::Approx(tail[0].gini));

    const std::vector<Vector> vs{Vector{1.0, 0.0, 0.0, 0.0}, Vector(4, 0.0), Vector{0.0, 1.0, 0.0, 0.0}};
    const auto batch = profile_batch(vs, eig);
    CHECK(batch.n_excluded == 1);
    CHECK(batch.kept == std::vector<std::size_t>{0, 2});
}

TEST_CASE("profile csv and json", "[spectral]") {
    const auto eig = diag_eig({3.0, 1.0});
    const auto p = spectral_profile(Vector{1.0, 1.0}, eig);
    const auto rows = parse_csv(profile_csv(p));
    REQUIRE(rows.size() == 4);
    CHECK(rows[1] == std::vector<std::string>{"0", "0", "0"});
    CHECK(parse_double(rows[2][1]) == p.cum_variance[0]);
    CHECK(parse_double(rows[2][2]) == p.cum_energy[0]);
    const auto j = profile_to_json(p);
    CHECK(j["gini"].get<double>() == p.gini);
    CHECK(j["d"] == 2);
}
