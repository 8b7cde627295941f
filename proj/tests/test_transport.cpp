#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "specgeo/synthetic.hpp"
#include "specgeo/transport.hpp"
#include "test_helpers.hpp"

using namespace specgeo;

TEST_CASE("naive transport follows an exact anchor rotation", "[transport]") {
    const Matrix x_src = testing::random_matrix(40, 6, 1);
    const Matrix q = haar_orthogonal(6, 2).q;
    const Matrix x_tgt = matmul(x_src, q);
    const auto map = naive_map(x_src, x_tgt);
    CHECK(max_abs_diff(map.m, q.transposed()) <= 1e-10);
    Rng rng(3);
    const Vector v = rng.normal_vector(6);
    // A source row x maps to x Q, so a column vector maps to Q^T v.
    const Vector expected = matvec_t(q, v);
    CHECK(max_abs_diff(naive_transport(v, x_src, x_tgt).v, expected) <= 1e-10);
}

TEST_CASE("WCA recovers planted whitened rotations", "[transport]") {
    const auto g = gen_shared_geometry(16, 400, 10, 5);
    for (const auto& c : g.unit.concepts) {
        const auto out = wca_transport(c.v_src, g.unit.cov_src, g.unit.cov_tgt, g.unit.x_src, g.unit.x_tgt);
        CHECK(cosine(out.v, c.v_tgt) >= 0.999);
        CHECK_FALSE(out.zero_input);
    }
    const auto map = wca_map(g.unit.cov_src, g.unit.cov_tgt, g.unit.x_src, g.unit.x_tgt);
    CHECK(orthogonality_error(map.rotation.q) <= 1e-10);
}

TEST_CASE("identity covariances reduce WCA to naive", "[transport]") {
    const auto g = gen_shared_geometry(8, 50, 3, 9, GeometryMode::shared_identity);
    const auto w = wca_map(g.unit.cov_src, g.unit.cov_tgt, g.unit.x_src, g.unit.x_tgt);
    const auto n = naive_map(g.unit.x_src, g.unit.x_tgt);
    CHECK(max_abs_diff(w.m, n.m) <= 1e-10);
}

TEST_CASE("zero vectors and shape errors", "[transport]") {
    const Matrix x = testing::random_matrix(10, 3, 4);
    const auto out = naive_transport(Vector(3, 0.0), x, x);
    CHECK(out.zero_input);
    CHECK(out.v == Vector(3, 0.0));
    CHECK_THROWS_AS(naive_transport(Vector(4, 1.0), x, x), Error);
    CHECK_THROWS_AS(naive_map(x, testing::random_matrix(9, 3, 5)), Error);

    const Matrix thin = testing::random_matrix(2, 4, 6);
    CHECK(naive_map(thin, thin).rotation.rank_deficient());
}

TEST_CASE("fake_sigma keeps the spectrum and replaces the basis", "[transport]") {
    const auto cov = gen_planted_spectrum(10, 1.0, 3);
    const auto fake = fake_sigma(cov, 4);
    CHECK(fake.eig.values == cov.eig.values);
    CHECK(max_abs_diff(fake.eig.reconstruct(), fake.sigma) <= 1e-12);
    CHECK(max_abs_diff(fake.sigma, cov.sigma) > 1e-3);
    CHECK(max_abs_diff(fake_sigma(cov, 4).sigma, fake.sigma) == 0.0);
    CHECK(trace(fake.sigma) == Catch::Approx(trace(cov.sigma)));
}

TEST_CASE("randomization experiment summary", "[transport]") {
    std::vector<TransportUnit> units;
    for (std::uint64_t u = 0; u < 4; ++u) units.push_back(gen_shared_geometry(12, 200, 5, 100 + u).unit);
    const auto rep = randomization_experiment(units, 3, 7);
    CHECK(rep.conditions.size() == 4);
    CHECK(rep.results.size() == 4 * 5 * (1 + 3));
    const auto& real = rep.condition("real_wca");
    CHECK(real.n == 20);
    CHECK(real.win_rate >= 0.9);
    CHECK(rep.condition("fake_wca").n == 60);
    REQUIRE(rep.primary_p().has_value());
    CHECK(*rep.primary_p() < 0.05);
    CHECK(rep.condition("real_vs_fake_per_seed").n == 12);
    CHECK(rep.anchor_counts == std::vector<std::size_t>{200, 200, 200, 200});
    CHECK_THROWS_AS(rep.condition("nope"), Error);

    const auto again = randomization_experiment(units, 3, 7);
    CHECK(to_json(again).dump() == to_json(rep).dump());

    const std::vector<TransportUnit> one{units[0]};
    const auto single = randomization_experiment(one, 2, 0);
    CHECK_FALSE(single.primary_p().has_value());
    CHECK_FALSE(single.warnings.empty());
    CHECK(to_json(single)["conditions"][2]["p_value"].is_null());
}
