#pragma once

// Concept transport between two representation spaces.
//
// Anchors are row-paired: row i of X_src and row i of X_tgt describe the same
// item. The alignment R is the orthogonal map taking source rows onto target
// rows, X_src R ~ X_tgt, i.e. procrustes(X_tgt, X_src). A column vector v in
// the source space therefore maps to R^T v.
//
//   naive: v -> R^T v                        R from the raw anchors
//   WCA:   v -> S_tgt^{1/2} R^T S_src^{-1/2} v
//                                            R from whitened anchors X S^{-1/2}

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specgeo/covariance.hpp"
#include "specgeo/error.hpp"
#include "specgeo/linalg.hpp"
#include "specgeo/stats.hpp"

namespace specgeo {

struct TransportOutput {
    Vector v;
    bool zero_input = false;
    bool rank_deficient = false;
};

/// Precomputed linear transport map.
struct TransportMap {
    Matrix m;  // d x d, applied as m v
    Rotation rotation;

    TransportOutput apply(std::span<const double> v) const {
        require(v.size() == m.cols(), Errc::dimension_mismatch, "vector and transport map dimensions differ");
        TransportOutput out;
        out.rank_deficient = rotation.rank_deficient();
        if (norm(v) == 0.0) {
            out.zero_input = true;
            out.v.assign(m.rows(), 0.0);
            return out;
        }
        out.v = matvec(m, v);
        return out;
    }
};

namespace detail {

inline void check_anchors(const Matrix& x_src, const Matrix& x_tgt) {
    require(x_src.rows() >= 1, Errc::invalid_argument, "no anchor rows");
    require(x_src.rows() == x_tgt.rows() && x_src.cols() == x_tgt.cols(), Errc::dimension_mismatch,
            "anchor matrices differ in shape");
}

} // namespace detail

inline TransportMap naive_map(const Matrix& x_src, const Matrix& x_tgt) {
    detail::check_anchors(x_src, x_tgt);
    TransportMap t;
    t.rotation = procrustes(x_tgt, x_src);
    t.m = t.rotation.q.transposed();
    return t;
}

inline TransportMap wca_map(const LanguageCovariance& cov_src, const LanguageCovariance& cov_tgt, const Matrix& x_src,
                            const Matrix& x_tgt) {
    detail::check_anchors(x_src, x_tgt);
    require(cov_src.dim() == x_src.cols() && cov_tgt.dim() == x_tgt.cols(), Errc::dimension_mismatch,
            "covariance and anchor dimensions differ");
    const Matrix src_inv_root = mat_power_sym(cov_src.eig, -0.5);
    const Matrix tgt_inv_root = mat_power_sym(cov_tgt.eig, -0.5);
    const Matrix tgt_root = mat_power_sym(cov_tgt.eig, 0.5);
    TransportMap t;
    t.rotation = procrustes(matmul(x_tgt, tgt_inv_root), matmul(x_src, src_inv_root));
    t.m = matmul(matmul(tgt_root, t.rotation.q.transposed()), src_inv_root);
    return t;
}

inline TransportOutput naive_transport(std::span<const double> v_src, const Matrix& x_src, const Matrix& x_tgt) {
    return naive_map(x_src, x_tgt).apply(v_src);
}

inline TransportOutput wca_transport(std::span<const double> v_src, const LanguageCovariance& cov_src,
                                     const LanguageCovariance& cov_tgt, const Matrix& x_src, const Matrix& x_tgt) {
    return wca_map(cov_src, cov_tgt, x_src, x_tgt).apply(v_src);
}

/// Same eigenvalues, Haar-random eigenvectors.
inline LanguageCovariance fake_sigma(const LanguageCovariance& cov, std::uint64_t seed) {
    const Rotation v = haar_orthogonal(cov.dim(), seed);
    auto fake = covariance_from_spectrum(cov.eig.values, v.q, cov.lambda_reg);
    fake.token_subset = cov.token_subset;
    return fake;
}

// ---------------------------------------------------------------------------
// Matched-spectrum randomization experiment

struct TransportConcept {
    std::string concept_id;
    Vector v_src;
    Vector v_tgt;  // ground truth in the target space
};

/// One (model, language pair) combination.
struct TransportUnit {
    std::string pair_id;
    LanguageCovariance cov_src, cov_tgt;
    Matrix x_src, x_tgt;
    std::vector<TransportConcept> concepts;
};

struct TransportResult {
    std::string pair_id;
    std::string concept_id;
    std::string condition;
    std::optional<std::size_t> seed_index;
    double cos_wca = 0.0;
    double cos_naive = 0.0;
    bool win = false;  // strict: ties are not wins
};

/// One row of the summary table.
struct ConditionSummary {
    std::string condition;
    double win_rate = 0.0;
    double mean_delta = 0.0;
    std::optional<double> t_stat;  // empty when the test is undefined
    std::optional<double> p_value;
    std::size_t n = 0;
};

struct RandomizationReport {
    std::size_t n_seeds = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> anchor_counts;
    std::vector<TransportResult> results;
    std::vector<ConditionSummary> conditions;  // real_wca, fake_wca, real_vs_fake_*
    std::vector<std::string> warnings;

    const ConditionSummary& condition(const std::string& name) const {
        for (const auto& c : conditions)
            if (c.condition == name) return c;
        fail(Errc::invalid_argument, "no condition '" + name + "'");
    }

    /// p of the primary comparison (per-pair deltas averaged over seeds).
    std::optional<double> primary_p() const { return condition("real_vs_fake_seed_averaged").p_value; }
};

namespace detail {

inline void fill_t(ConditionSummary& c, std::span<const double> xs, std::vector<std::string>& warnings) {
    c.n = xs.size();
    if (xs.size() < 2) {
        warnings.push_back(c.condition + ": t test undefined with " + std::to_string(xs.size()) + " observation(s)");
        return;
    }
    const auto r = one_sample_t(xs, 0.0);
    if (r.zero_variance) warnings.push_back(c.condition + ": zero-variance differences, t is degenerate");
    c.t_stat = r.statistic;
    c.p_value = r.p_value;
}

inline void fill_paired(ConditionSummary& c, std::span<const double> a, std::span<const double> b,
                        std::vector<std::string>& warnings) {
    const auto d = differences(a, b);
    std::size_t wins = 0;
    for (double x : d) wins += x > 0.0;
    c.win_rate = d.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(d.size());
    c.mean_delta = d.empty() ? 0.0 : mean(d);
    fill_t(c, d, warnings);
}

} // namespace detail

/// Real-WCA and Fake-WCA against the naive baseline over all units. Fake
/// covariances for unit u and seed s come from derive_seed(seed, u, s), with
/// substreams 0 and 1 for source and target.
///
/// Per condition, win_rate and mean_delta pool every (unit, concept[, seed])
/// case; t_stat/p_value test the per-unit mean delta against zero. The two
/// conditions are compared by a paired t over units, once with fake deltas
/// averaged over seeds and once with one observation per (unit, seed).
inline RandomizationReport randomization_experiment(std::span<const TransportUnit> units, std::size_t n_seeds,
                                                    std::uint64_t seed) {
    require(n_seeds >= 1, Errc::invalid_argument, "n_seeds must be >= 1");
    require(!units.empty(), Errc::invalid_argument, "no transport units");
    RandomizationReport rep;
    rep.n_seeds = n_seeds;
    rep.seed = seed;

    std::size_t real_wins = 0, real_cases = 0, fake_wins = 0, fake_cases = 0;
    double real_delta_sum = 0.0, fake_delta_sum = 0.0;
    std::vector<double> unit_real, unit_fake_avg, per_seed_real, per_seed_fake;

    for (std::size_t u = 0; u < units.size(); ++u) {
        const auto& unit = units[u];
        require(!unit.concepts.empty(), Errc::invalid_argument, "transport unit '" + unit.pair_id + "' has no concepts");
        rep.anchor_counts.push_back(unit.x_src.rows());
        const auto naive = naive_map(unit.x_src, unit.x_tgt);
        if (naive.rotation.rank_deficient())
            rep.warnings.push_back(unit.pair_id + ": anchors are rank deficient, naive rotation is not unique");
        const auto real = wca_map(unit.cov_src, unit.cov_tgt, unit.x_src, unit.x_tgt);

        std::vector<double> cos_naive;
        for (const auto& c : unit.concepts) {
            require(c.v_src.size() == unit.x_src.cols() && c.v_tgt.size() == unit.x_tgt.cols(), Errc::dimension_mismatch,
                    "concept and anchor dimensions differ");
            cos_naive.push_back(cosine(naive.apply(c.v_src).v, c.v_tgt));
        }

        auto run = [&](const TransportMap& map, const std::string& cond, std::optional<std::size_t> s) {
            double delta = 0.0;
            for (std::size_t i = 0; i < unit.concepts.size(); ++i) {
                const auto& c = unit.concepts[i];
                TransportResult r;
                r.pair_id = unit.pair_id;
                r.concept_id = c.concept_id;
                r.condition = cond;
                r.seed_index = s;
                r.cos_wca = cosine(map.apply(c.v_src).v, c.v_tgt);
                r.cos_naive = cos_naive[i];
                r.win = r.cos_wca > r.cos_naive;
                delta += r.cos_wca - r.cos_naive;
                rep.results.push_back(std::move(r));
            }
            return delta;
        };

        const std::size_t first_real = rep.results.size();
        const double real_delta = run(real, "real_wca", std::nullopt);
        for (std::size_t i = first_real; i < rep.results.size(); ++i) real_wins += rep.results[i].win;
        real_cases += unit.concepts.size();
        real_delta_sum += real_delta;
        const double real_mean = real_delta / static_cast<double>(unit.concepts.size());
        unit_real.push_back(real_mean);

        double fake_acc = 0.0;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const std::uint64_t base = derive_seed(seed, u, s);
            const auto fs = fake_sigma(unit.cov_src, derive_seed(base, 0));
            const auto ft = fake_sigma(unit.cov_tgt, derive_seed(base, 1));
            const auto fake = wca_map(fs, ft, unit.x_src, unit.x_tgt);
            const std::size_t first = rep.results.size();
            const double fd = run(fake, "fake_wca", s);
            for (std::size_t i = first; i < rep.results.size(); ++i) fake_wins += rep.results[i].win;
            fake_cases += unit.concepts.size();
            fake_delta_sum += fd;
            const double fm = fd / static_cast<double>(unit.concepts.size());
            fake_acc += fm;
            per_seed_real.push_back(real_mean);
            per_seed_fake.push_back(fm);
        }
        unit_fake_avg.push_back(fake_acc / static_cast<double>(n_seeds));
    }

    ConditionSummary real;
    real.condition = "real_wca";
    real.win_rate = static_cast<double>(real_wins) / static_cast<double>(real_cases);
    real.mean_delta = real_delta_sum / static_cast<double>(real_cases);
    detail::fill_t(real, unit_real, rep.warnings);
    real.n = real_cases;

    ConditionSummary fake;
    fake.condition = "fake_wca";
    fake.win_rate = static_cast<double>(fake_wins) / static_cast<double>(fake_cases);
    fake.mean_delta = fake_delta_sum / static_cast<double>(fake_cases);
    detail::fill_t(fake, unit_fake_avg, rep.warnings);
    fake.n = fake_cases;

    ConditionSummary avg;
    avg.condition = "real_vs_fake_seed_averaged";
    detail::fill_paired(avg, unit_real, unit_fake_avg, rep.warnings);
    ConditionSummary per;
    per.condition = "real_vs_fake_per_seed";
    detail::fill_paired(per, per_seed_real, per_seed_fake, rep.warnings);

    rep.conditions = {real, fake, avg, per};
    return rep;
}

inline nlohmann::ordered_json to_json(const ConditionSummary& c) {
    nlohmann::ordered_json j;
    j["condition"] = c.condition;
    j["win_rate"] = c.win_rate;
    j["mean_delta"] = c.mean_delta;
    j["t_stat"] = c.t_stat ? number_json(*c.t_stat) : nlohmann::ordered_json(nullptr);
    j["p_value"] = c.p_value ? nlohmann::ordered_json(*c.p_value) : nlohmann::ordered_json(nullptr);
    j["n"] = c.n;
    return j;
}

inline nlohmann::ordered_json to_json(const RandomizationReport& r, bool include_results = true) {
    nlohmann::ordered_json j;
    j["experiment"] = "matched_spectrum_randomization";
    j["config"] = {{"n_seeds", r.n_seeds},
                   {"seed", r.seed},
                   {"anchor_counts", r.anchor_counts},
                   {"tie_rule", "cos_wca == cos_naive counts as a non-win"},
                   {"alignment", "orthogonal R with X_src R ~ X_tgt; whitening X S^{-1/2}, symmetric root"},
                   {"primary_comparison", "real_vs_fake_seed_averaged"}};
    j["conditions"] = nlohmann::ordered_json::array();
    for (const auto& c : r.conditions) j["conditions"].push_back(to_json(c));
    j["warnings"] = r.warnings;
    if (include_results) {
        j["results"] = nlohmann::ordered_json::array();
        for (const auto& x : r.results) {
            nlohmann::ordered_json e;
            e["pair_id"] = x.pair_id;
            e["concept_id"] = x.concept_id;
            e["condition"] = x.condition;
            e["seed_index"] = x.seed_index ? nlohmann::ordered_json(*x.seed_index) : nlohmann::ordered_json(nullptr);
            e["cos_wca"] = x.cos_wca;
            e["cos_naive"] = x.cos_naive;
            e["win"] = x.win;
            j["results"].push_back(std::move(e));
        }
    }
    return j;
}

} // namespace specgeo
