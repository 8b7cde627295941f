#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "specgeo/error.hpp"
#include "specgeo/random.hpp"

namespace specgeo {

enum class TestMethod { one_sample_t, paired_t, wilcoxon_exact, wilcoxon_normal };

inline std::string to_string(TestMethod m) {
    switch (m) {
    case TestMethod::one_sample_t: return "one_sample_t";
    case TestMethod::paired_t: return "paired_t";
    case TestMethod::wilcoxon_exact: return "wilcoxon_exact";
    case TestMethod::wilcoxon_normal: return "wilcoxon_normal";
    }
    return "paired_t";
}

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    double df = 0.0;
    TestMethod method = TestMethod::paired_t;
    bool two_sided = true;
    /// Zero variance: statistic is 0 (mean on the null) or +-inf.
    bool zero_variance = false;
};

struct BootstrapCI {
    double low = 0.0;
    double high = 0.0;
    double level = 0.95;
    std::size_t n_resamples = 0;
};

enum class Direction { greater, less, two_sided };

inline Direction parse_direction(const std::string& s) {
    if (s == "greater") return Direction::greater;
    if (s == "less") return Direction::less;
    if (s == "two_sided") return Direction::two_sided;
    fail(Errc::invalid_argument, "unknown direction '" + s + "'");
}

inline double mean(std::span<const double> x) {
    require(!x.empty(), Errc::invalid_argument, "mean of an empty sample");
    // Shifted by the first element so that constant samples average exactly.
    const double x0 = x[0];
    double s = 0.0;
    for (double v : x) s += v - x0;
    return x0 + s / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double sample_sd(std::span<const double> x) {
    require(x.size() >= 2, Errc::invalid_argument, "sd needs at least two values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

namespace detail {

inline std::vector<double> differences(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), Errc::dimension_mismatch, "paired samples differ in length");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

/// sd that counts as zero: rounding noise of a constant sample.
inline bool negligible_sd(double sd, std::span<const double> x) {
    double scale = 0.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    return sd <= 1e-14 * scale;
}

inline double t_two_sided_p(double t, double df) {
    if (std::isinf(t)) return 0.0;
    boost::math::students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

} // namespace detail

/// Student-t test of mean(x) against mu0, two sided.
inline TestResult one_sample_t(std::span<const double> x, double mu0 = 0.0) {
    require(x.size() >= 2, Errc::invalid_argument, "t test needs n >= 2");
    TestResult r;
    r.method = TestMethod::one_sample_t;
    r.n = x.size();
    r.df = static_cast<double>(x.size() - 1);
    const double m = mean(x) - mu0;
    const double sd = sample_sd(x);
    if (detail::negligible_sd(sd, x)) {
        r.zero_variance = true;
        if (m == 0.0) {
            r.statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.statistic = m > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p_value = 0.0;
        }
        return r;
    }
    r.statistic = m / (sd / std::sqrt(static_cast<double>(x.size())));
    r.p_value = detail::t_two_sided_p(r.statistic, r.df);
    return r;
}

/// One-sample t on the differences a - b.
inline TestResult paired_t(std::span<const double> a, std::span<const double> b) {
    const auto d = detail::differences(a, b);
    auto r = one_sample_t(d, 0.0);
    r.method = TestMethod::paired_t;
    return r;
}

/// mean(a - b) / sd(a - b). Zero variance gives 0 on a zero mean and +-inf
/// otherwise.
inline double cohens_d_paired(std::span<const double> a, std::span<const double> b) {
    const auto d = detail::differences(a, b);
    require(d.size() >= 2, Errc::invalid_argument, "Cohen's d needs n >= 2");
    const double m = mean(d);
    const double sd = sample_sd(d);
    if (detail::negligible_sd(sd, d)) {
        if (m == 0.0) return 0.0;
        return m > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    return m / sd;
}

enum class WilcoxonMode { automatic, exact, normal };

inline constexpr std::size_t kWilcoxonExactMaxN = 20;

/// Signed-rank test on a - b. Zero differences are dropped; tied magnitudes
/// get average ranks. The statistic is min(W+, W-). The exact p doubles the
/// smaller tail of the null distribution of W+; the normal approximation uses
/// tie-corrected variance and a 0.5 continuity correction.
inline TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                       WilcoxonMode mode = WilcoxonMode::automatic) {
    auto diffs = detail::differences(a, b);
    std::vector<double> d;
    for (double x : diffs)
        if (x != 0.0) d.push_back(x);
    require(!d.empty(), Errc::invalid_argument, "all paired differences are zero");
    const std::size_t n = d.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
    // Doubled ranks keep average ranks integral.
    std::vector<std::uint64_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const std::uint64_t r2 = (i + 1) + (j + 1);  // 2 * average of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    std::uint64_t w_plus2 = 0, total2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0) w_plus2 += rank2[i];
    }
    const double w_plus = static_cast<double>(w_plus2) / 2.0;
    const double w_minus = static_cast<double>(total2 - w_plus2) / 2.0;

    TestResult r;
    r.n = n;
    r.df = static_cast<double>(n);
    r.statistic = std::min(w_plus, w_minus);
    const bool exact = mode == WilcoxonMode::exact || (mode == WilcoxonMode::automatic && n <= kWilcoxonExactMaxN);
    if (exact) {
        r.method = TestMethod::wilcoxon_exact;
        // Subset-sum counts over doubled ranks, each sign equally likely.
        std::vector<double> count(total2 + 1, 0.0);
        count[0] = 1.0;
        std::uint64_t reach = 0;
        for (std::size_t i = 0; i < n; ++i) {
            reach += rank2[i];
            for (std::uint64_t s = reach; s >= rank2[i]; --s) {
                count[s] += count[s - rank2[i]];
                if (s == rank2[i]) break;
            }
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        double le = 0.0, ge = 0.0;
        for (std::uint64_t s = 0; s <= total2; ++s) {
            if (s <= w_plus2) le += count[s];
            if (s >= w_plus2) ge += count[s];
        }
        r.p_value = std::min(1.0, 2.0 * std::min(le, ge) / all);
    } else {
        r.method = TestMethod::wilcoxon_normal;
        const double nd = static_cast<double>(n);
        const double mu = nd * (nd + 1.0) / 4.0;
        const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
        if (!(var > 0.0)) {
            r.p_value = 1.0;
        } else {
            const double dev = std::max(0.0, std::abs(w_plus - mu) - 0.5);
            const double z = dev / std::sqrt(var);
            boost::math::normal_distribution<double> nrm;
            r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(nrm, z)));
        }
    }
    return r;
}

/// Hyndman-Fan type 7 quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    require(!sorted.empty(), Errc::invalid_argument, "quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline constexpr std::size_t kDefaultResamples = 10000;

/// Percentile bootstrap interval of the mean. Resample b draws from the
/// substream derive_seed(seed, b).
inline BootstrapCI bootstrap_ci(std::span<const double> x, std::size_t n_resamples = kDefaultResamples,
                                double level = 0.95, std::uint64_t seed = 0) {
    require(!x.empty(), Errc::invalid_argument, "bootstrap needs a non-empty sample");
    require(n_resamples >= 1, Errc::invalid_argument, "bootstrap needs at least one resample");
    require(level > 0.0 && level < 1.0, Errc::invalid_argument, "level must be in (0, 1)");
    const std::size_t n = x.size();
    std::vector<double> means(n_resamples);
    std::vector<double> draw(n);
    for (std::size_t b = 0; b < n_resamples; ++b) {
        Rng rng(derive_seed(seed, b));
        for (std::size_t i = 0; i < n; ++i) draw[i] = x[rng.below(n)];
        means[b] = mean(draw);
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1.0 - level) / 2.0;
    return {quantile_sorted(means, alpha), quantile_sorted(means, 1.0 - alpha), level, n_resamples};
}

/// (1 + #{null samples at least as extreme}) / (1 + N).
inline double monte_carlo_p(double observed, std::span<const double> null_samples, Direction dir) {
    require(!null_samples.empty(), Errc::invalid_argument, "monte_carlo_p needs null samples");
    std::size_t ge = 0, le = 0;
    for (double s : null_samples) {
        if (s >= observed) ++ge;
        if (s <= observed) ++le;
    }
    const double denom = 1.0 + static_cast<double>(null_samples.size());
    const double pg = (1.0 + static_cast<double>(ge)) / denom;
    const double pl = (1.0 + static_cast<double>(le)) / denom;
    switch (dir) {
    case Direction::greater: return pg;
    case Direction::less: return pl;
    case Direction::two_sided: return std::min(1.0, 2.0 * std::min(pg, pl));
    }
    return 1.0;
}

/// Means of `n_suites` suites of `suite_size` values drawn with replacement
/// from `pool`; suite s uses the substream derive_seed(seed, s).
inline std::vector<double> resampled_suite_means(std::span<const double> pool, std::size_t suite_size, std::size_t n_suites,
                                                 std::uint64_t seed) {
    require(!pool.empty() && suite_size >= 1, Errc::invalid_argument, "empty pool or suite");
    std::vector<double> out(n_suites), draw(suite_size);
    for (std::size_t s = 0; s < n_suites; ++s) {
        Rng rng(derive_seed(seed, s));
        for (auto& x : draw) x = pool[rng.below(pool.size())];
        out[s] = mean(draw);
    }
    return out;
}

/// Means of consecutive disjoint chunks of `suite_size` values.
inline std::vector<double> chunk_means(std::span<const double> values, std::size_t suite_size) {
    require(suite_size >= 1 && values.size() >= suite_size, Errc::invalid_argument, "not enough values for one chunk");
    std::vector<double> out;
    for (std::size_t i = 0; i + suite_size <= values.size(); i += suite_size) out.push_back(mean(values.subspan(i, suite_size)));
    return out;
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
inline double ks_uniform_distance(std::span<const double> ps) {
    require(!ps.empty(), Errc::invalid_argument, "KS distance of an empty sample");
    std::vector<double> s(ps.begin(), ps.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double u = std::clamp(s[i], 0.0, 1.0);
        dmax = std::max({dmax, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
    }
    return dmax;
}

/// Non-finite statistics are written as strings ("inf", "-inf").
inline nlohmann::ordered_json number_json(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

inline nlohmann::ordered_json to_json(const TestResult& r) {
    nlohmann::ordered_json j;
    j["method"] = to_string(r.method);
    j["statistic"] = number_json(r.statistic);
    j["p_value"] = r.p_value;
    j["n"] = r.n;
    j["df"] = r.df;
    j["two_sided"] = r.two_sided;
    j["zero_variance"] = r.zero_variance;
    return j;
}

inline nlohmann::ordered_json to_json(const BootstrapCI& ci) {
    return {{"low", ci.low}, {"high", ci.high}, {"level", ci.level}, {"n_resamples", ci.n_resamples}};
}

} // namespace specgeo
