#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "specgeo/stats.hpp"
#include "test_helpers.hpp"

using namespace specgeo;

namespace {

// Exhaustive sign-flip distribution of W+ with average ranks.
double enumerated_wilcoxon_p(const std::vector<double>& d) {
    const std::size_t n = d.size();
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(d[j]) < std::abs(d[i])) ++less;
            if (std::abs(d[j]) == std::abs(d[i])) ++equal;
        }
        rank[i] = less + (equal + 1) / 2.0;
    }
    double obs = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0) obs += rank[i];
    double le = 0, ge = 0;
    for (std::size_t mask = 0; mask < (1u << n); ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) w += rank[i];
        if (w <= obs + 1e-9) ++le;
        if (w >= obs - 1e-9) ++ge;
    }
    return std::min(1.0, 2.0 * std::min(le, ge) / static_cast<double>(1u << n));
}

} // namespace

TEST_CASE("paired t on differences 1, 2, 3", "[stats]") {
    const std::vector<double> a{1.0, 2.0, 3.0}, b{0.0, 0.0, 0.0};
    const auto r = paired_t(a, b);
    const double t = std::sqrt(12.0);
    CHECK(r.statistic == Catch::Approx(t).epsilon(1e-14));
    CHECK(r.df == 2.0);
    // df = 2: two-sided p = 1 - t / sqrt(2 + t^2)
    CHECK(r.p_value == Catch::Approx(1.0 - t / std::sqrt(2.0 + t * t)).epsilon(1e-12));
    CHECK(std::abs(r.p_value - 0.0742) <= 1e-4);
    CHECK(cohens_d_paired(a, b) == 2.0);
    CHECK(cohens_d_paired(b, a) == -2.0);
}

TEST_CASE("one-sample t matches closed forms for df = 1", "[stats]") {
    // df = 1 is Cauchy: p = 1 - (2/pi) atan|t|
    const std::vector<double> x{1.0, 3.0};
    const auto r = one_sample_t(x);
    CHECK(r.statistic == Catch::Approx(2.0));
    CHECK(r.p_value == Catch::Approx(1.0 - 2.0 / M_PI * std::atan(2.0)).epsilon(1e-12));
    CHECK(one_sample_t(x, 2.0).statistic == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("zero-variance samples", "[stats]") {
    const std::vector<double> c{2.0, 2.0, 2.0};
    const auto r = one_sample_t(c);
    CHECK(r.zero_variance);
    CHECK(std::isinf(r.statistic));
    CHECK(r.statistic > 0);
    CHECK(r.p_value == 0.0);
    const std::vector<double> z{0.0, 0.0, 0.0};
    const auto rz = one_sample_t(z);
    CHECK(rz.statistic == 0.0);
    CHECK(rz.p_value == 1.0);
    CHECK(cohens_d_paired(c, z) == std::numeric_limits<double>::infinity());
    CHECK(cohens_d_paired(z, z) == 0.0);
    CHECK(to_json(r)["statistic"] == "inf");
    CHECK_THROWS_AS(one_sample_t(std::vector<double>{1.0}), Error);
}

TEST_CASE("Wilcoxon exact p agrees with enumeration", "[stats][wilcoxon]") {
    const std::vector<double> zeros(6, 0.0);
    Rng rng(12);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 1 + rng.below(6);
        std::vector<double> d(n);
        for (auto& x : d) {
            x = static_cast<double>(1 + rng.below(4)) * (rng.below(2) ? 1.0 : -1.0);
        }
        const auto r = wilcoxon_signed_rank(d, std::span<const double>(zeros).first(n), WilcoxonMode::exact);
        CHECK(r.p_value == Catch::Approx(enumerated_wilcoxon_p(d)).margin(1e-12));
        CHECK(r.method == TestMethod::wilcoxon_exact);
    }
    const std::vector<double> pos{1, 2, 3, 4, 5}, zero5(5, 0.0);
    const auto r5 = wilcoxon_signed_rank(pos, zero5);
    CHECK(r5.p_value == Catch::Approx(2.0 / 32.0));
    CHECK(r5.statistic == 0.0);
}

TEST_CASE("Wilcoxon drops zero differences and switches to normal", "[stats][wilcoxon]") {
    const std::vector<double> a{1, 0, 2, 0}, b{0, 0, 0, 0};
    const auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.n == 2);
    CHECK(r.p_value == Catch::Approx(0.5));
    CHECK_THROWS_AS(wilcoxon_signed_rank(b, b), Error);

    std::vector<double> x(30), y(30, 0.0);
    for (int i = 0; i < 30; ++i) x[i] = i + 1.0;
    const auto rn = wilcoxon_signed_rank(x, y);
    CHECK(rn.method == TestMethod::wilcoxon_normal);
    // W+ = 465, mu = 232.5, var = 30*31*61/24
    const double z = (465.0 - 232.5 - 0.5) / std::sqrt(30.0 * 31.0 * 61.0 / 24.0);
    CHECK(rn.p_value == Catch::Approx(std::erfc(z / std::sqrt(2.0))).epsilon(1e-10));
}

TEST_CASE("bootstrap interval is reproducible and covers the mean", "[stats][bootstrap]") {
    const std::vector<double> x{1.0, 4.0, 2.0, 8.0, 5.0, 7.0};
    const auto a = bootstrap_ci(x, 2000, 0.95, 3);
    const auto b = bootstrap_ci(x, 2000, 0.95, 3);
    CHECK(a.low == b.low);
    CHECK(a.high == b.high);
    CHECK(a.low < mean(x));
    CHECK(a.high > mean(x));
    CHECK(a.low >= 1.0);
    CHECK(a.high <= 8.0);
    const std::vector<double> c{3.0, 3.0};
    const auto cc = bootstrap_ci(c, 100, 0.9, 0);
    CHECK(cc.low == 3.0);
    CHECK(cc.high == 3.0);
}

TEST_CASE("quantiles, Monte-Carlo p and suite means", "[stats]") {
    const std::vector<double> s{1.0, 2.0, 3.0, 4.0};
    CHECK(quantile_sorted(s, 0.0) == 1.0);
    CHECK(quantile_sorted(s, 1.0) == 4.0);
    CHECK(quantile_sorted(s, 0.5) == 2.5);
    CHECK(quantile_sorted(s, 0.25) == Catch::Approx(1.75));

    std::vector<double> null(9999);
    for (std::size_t i = 0; i < null.size(); ++i) null[i] = static_cast<double>(i);
    CHECK(monte_carlo_p(1e9, null, Direction::greater) == 1.0 / 10000.0);
    CHECK(monte_carlo_p(-1.0, null, Direction::less) == 1.0 / 10000.0);
    CHECK(monte_carlo_p(9998.0, null, Direction::greater) == 2.0 / 10000.0);
    CHECK(monte_carlo_p(5000.0, null, Direction::two_sided) == 1.0);

    const auto suites = resampled_suite_means(s, 3, 10, 1);
    CHECK(suites.size() == 10);
    CHECK(suites == resampled_suite_means(s, 3, 10, 1));
    for (double m : suites) {
        CHECK(m >= 1.0);
        CHECK(m <= 4.0);
    }
    CHECK(chunk_means(s, 2) == std::vector<double>{1.5, 3.5});
}

TEST_CASE("KS distance from uniform", "[stats]") {
    CHECK(ks_uniform_distance(std::vector<double>{0.5}) == 0.5);
    std::vector<double> grid;
    for (int i = 0; i < 100; ++i) grid.push_back((i + 0.5) / 100.0);
    CHECK(ks_uniform_distance(grid) == Catch::Approx(0.005));
    CHECK(ks_uniform_distance(std::vector<double>(10, 0.0)) == 1.0);
}
