#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specgeo/error.hpp"
#include "specgeo/format.hpp"
#include "specgeo/manifest.hpp"
#include "specgeo/matrix.hpp"
#include "specgeo/optimize.hpp"
#include "specgeo/random.hpp"
#include "specgeo/spectral.hpp"
#include "specgeo/tensor.hpp"

namespace specgeo {

inline constexpr double kZeroEnergyNorm = 1e-12;

enum class ConceptMethod { diff_of_means, unembedding, random_pair, sae_feature, probe };

inline std::string to_string(ConceptMethod m) {
    switch (m) {
    case ConceptMethod::diff_of_means: return "diff_of_means";
    case ConceptMethod::unembedding: return "unembedding";
    case ConceptMethod::random_pair: return "random_pair";
    case ConceptMethod::sae_feature: return "sae_feature";
    case ConceptMethod::probe: return "probe";
    }
    return "diff_of_means";
}

inline ConceptMethod parse_method(const std::string& s) {
    for (auto m : {ConceptMethod::diff_of_means, ConceptMethod::unembedding, ConceptMethod::random_pair,
                   ConceptMethod::sae_feature, ConceptMethod::probe})
        if (to_string(m) == s) return m;
    fail(Errc::schema, "unknown concept method '" + s + "'");
}

struct ConceptVector {
    std::string concept_id;
    ConceptMethod method = ConceptMethod::diff_of_means;
    Vector v;
    std::size_t n_pairs_used = 0;
    bool zero_energy = false;
    std::string model_id;

    void refresh_zero_energy() { zero_energy = !(norm(v) >= kZeroEnergyNorm); }
};

/// v = (1/n) sum_i (pos_i - neg_i) over paired rows.
inline ConceptVector diff_of_means(const Matrix& pos, const Matrix& neg, std::string concept_id = {}) {
    require(pos.rows() >= 1, Errc::invalid_argument, "diff_of_means needs at least one pair");
    require(pos.rows() == neg.rows(), Errc::dimension_mismatch, "positive and negative row counts differ");
    require(pos.cols() == neg.cols(), Errc::dimension_mismatch, "positive and negative widths differ");
    require(all_finite(pos.data()) && all_finite(neg.data()), Errc::non_finite, "activations contain NaN or Inf");
    ConceptVector cv;
    cv.concept_id = std::move(concept_id);
    cv.method = ConceptMethod::diff_of_means;
    cv.v.assign(pos.cols(), 0.0);
    for (std::size_t i = 0; i < pos.rows(); ++i)
        for (std::size_t j = 0; j < pos.cols(); ++j) cv.v[j] += pos(i, j) - neg(i, j);
    for (auto& x : cv.v) x /= static_cast<double>(pos.rows());
    cv.n_pairs_used = pos.rows();
    cv.refresh_zero_energy();
    return cv;
}

/// word -> token ids built from exact matches in a token table. Used when a
/// manifest carries no precomputed word_tokens.
inline std::map<std::string, std::vector<std::int64_t>> word_ids_from_table(std::span<const TokenEntry> table) {
    std::map<std::string, std::vector<std::int64_t>> out;
    for (const auto& t : table) out[t.token].push_back(t.id);
    return out;
}

/// Mean of gamma(w+) - gamma(w-) over the pairs whose words both map to a
/// single token id.
inline ConceptVector unembed_contrast(const ConceptSpec& spec,
                                      const std::map<std::string, std::vector<std::int64_t>>& word_tokens,
                                      const Matrix& w_u) {
    ConceptVector cv;
    cv.concept_id = spec.concept_id;
    cv.method = ConceptMethod::unembedding;
    cv.v.assign(w_u.cols(), 0.0);
    auto single = [&](const std::string& w) -> std::int64_t {
        auto it = word_tokens.find(w);
        if (it == word_tokens.end() || it->second.size() != 1) return -1;
        const auto id = it->second.front();
        require(id >= 0 && static_cast<std::size_t>(id) < w_u.rows(), Errc::invalid_argument, "token id out of range");
        return id;
    };
    for (const auto& [pos, neg] : spec.pairs) {
        const auto a = single(pos), b = single(neg);
        if (a < 0 || b < 0) continue;
        const auto ra = w_u.row(static_cast<std::size_t>(a)), rb = w_u.row(static_cast<std::size_t>(b));
        for (std::size_t j = 0; j < cv.v.size(); ++j) cv.v[j] += ra[j] - rb[j];
        ++cv.n_pairs_used;
    }
    if (cv.n_pairs_used > 0)
        for (auto& x : cv.v) x /= static_cast<double>(cv.n_pairs_used);
    cv.refresh_zero_energy();
    return cv;
}

inline ConceptVector unembed_contrast(const ConceptSpec& spec, const Manifest& m, const Matrix& w_u) {
    if (!m.word_tokens.empty()) return unembed_contrast(spec, m.word_tokens, w_u);
    return unembed_contrast(spec, word_ids_from_table(m.token_table), w_u);
}

inline constexpr std::size_t kDefaultNullSize = 1000;

/// n differences gamma(a) - gamma(b), a != b drawn uniformly from `subset`.
/// Draw i uses the substream derive_seed(seed, i).
inline std::vector<ConceptVector> random_pair_null(const Matrix& w_u, std::span<const std::int64_t> subset,
                                                   std::size_t n, std::uint64_t seed) {
    require(subset.size() >= 2, Errc::invalid_argument, "random pair null needs at least two tokens");
    for (auto id : subset)
        require(id >= 0 && static_cast<std::size_t>(id) < w_u.rows(), Errc::invalid_argument, "token id out of range");
    std::vector<ConceptVector> out;
    out.reserve(n);
    const std::uint64_t m = subset.size();
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        const std::uint64_t ia = rng.below(m);
        std::uint64_t ib = rng.below(m - 1);
        if (ib >= ia) ++ib;
        ConceptVector cv;
        cv.concept_id = "random_pair_" + std::to_string(i);
        cv.method = ConceptMethod::random_pair;
        cv.v = subtract(w_u.row(static_cast<std::size_t>(subset[ia])), w_u.row(static_cast<std::size_t>(subset[ib])));
        cv.n_pairs_used = 1;
        cv.refresh_zero_energy();
        out.push_back(std::move(cv));
    }
    return out;
}

struct SaeOptions {
    /// Rank by signed mean difference (pos - neg) instead of its magnitude.
    bool signed_score = false;
};

struct SaeSelection {
    std::vector<std::size_t> features;  // best first
    std::vector<double> scores;         // aligned with `features`
    std::vector<ConceptVector> vectors; // decoder rows of `features`
    ConceptVector averaged;             // normalized mean of the unit decoder rows
};

/// Top-k features by |mean(pos[:, j]) - mean(neg[:, j])|, ties to the lower
/// index.
inline SaeSelection sae_select(const Matrix& decoder, const Matrix& acts_pos, const Matrix& acts_neg, std::size_t k,
                               const std::string& concept_id = {}, const SaeOptions& opts = {}) {
    const std::size_t m = decoder.rows();
    require(acts_pos.cols() == m && acts_neg.cols() == m, Errc::dimension_mismatch,
            "activation width differs from decoder feature count");
    require(acts_pos.rows() >= 1 && acts_neg.rows() >= 1, Errc::invalid_argument, "empty activation set");
    require(k >= 1, Errc::invalid_argument, "k must be >= 1");
    require(k <= m, Errc::invalid_argument, "k exceeds feature count");

    Vector score(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        double mp = 0.0, mn = 0.0;
        for (std::size_t i = 0; i < acts_pos.rows(); ++i) mp += acts_pos(i, j);
        for (std::size_t i = 0; i < acts_neg.rows(); ++i) mn += acts_neg(i, j);
        const double diff = mp / static_cast<double>(acts_pos.rows()) - mn / static_cast<double>(acts_neg.rows());
        score[j] = opts.signed_score ? diff : std::abs(diff);
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    SaeSelection sel;
    const std::size_t d = decoder.cols();
    sel.averaged.concept_id = concept_id;
    sel.averaged.method = ConceptMethod::sae_feature;
    sel.averaged.v.assign(d, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t j = order[r];
        sel.features.push_back(j);
        sel.scores.push_back(score[j]);
        ConceptVector cv;
        cv.concept_id = concept_id;
        cv.method = ConceptMethod::sae_feature;
        cv.v = decoder.row_vector(j);
        cv.n_pairs_used = acts_pos.rows();
        cv.refresh_zero_energy();
        const double nrm = norm(cv.v);
        if (nrm > 0.0)
            for (std::size_t c = 0; c < d; ++c) sel.averaged.v[c] += cv.v[c] / nrm;
        sel.vectors.push_back(std::move(cv));
    }
    const double an = norm(sel.averaged.v);
    if (an > 0.0)
        for (auto& x : sel.averaged.v) x /= an;
    sel.averaged.n_pairs_used = acts_pos.rows();
    sel.averaged.refresh_zero_energy();
    return sel;
}

/// Features chosen as top-1 by more than one concept.
struct FeatureCollapse {
    std::size_t feature = 0;
    std::vector<std::string> concepts;
};

inline std::vector<FeatureCollapse> count_collapse(std::span<const SaeSelection> selections) {
    std::map<std::size_t, std::vector<std::string>> by_feature;
    for (const auto& s : selections)
        if (!s.features.empty()) by_feature[s.features.front()].push_back(s.averaged.concept_id);
    std::vector<FeatureCollapse> out;
    for (auto& [f, cs] : by_feature)
        if (cs.size() >= 2) out.push_back({f, std::move(cs)});
    return out;
}

/// Gini of an SAE selection aggregated two ways: the mean over per-feature
/// profiles, and the profile of the averaged unit vector.
struct SaeGini {
    double per_feature_mean = 0.0;
    double averaged_vector = 0.0;
    std::size_t n_features = 0;
};

inline SaeGini sae_gini(const SaeSelection& sel, const EigenSystem& eig) {
    SaeGini g;
    for (const auto& cv : sel.vectors) {
        if (cv.zero_energy) continue;
        g.per_feature_mean += spectral_profile(cv.v, eig).gini;
        ++g.n_features;
    }
    require(g.n_features > 0, Errc::zero_vector, "all selected decoder rows are zero");
    g.per_feature_mean /= static_cast<double>(g.n_features);
    g.averaged_vector = spectral_profile(sel.averaged.v, eig).gini;
    return g;
}

// ---------------------------------------------------------------------------
// Binary logistic probe

struct ProbeModel {
    Vector weights;
    double bias = 0.0;
    double reg_strength = 0.0;
    double train_accuracy = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<double> objective_trace;

    int predict(std::span<const double> x) const { return dot(weights, x) + bias > 0.0 ? 1 : 0; }
};

/// reg such that the objective matches an inverse-strength C reported per
/// sample count n: reg = 1 / (n C).
inline double reg_from_C(double c, std::size_t n) {
    require(c > 0.0 && n > 0, Errc::invalid_argument, "C and n must be positive");
    return 1.0 / (static_cast<double>(n) * c);
}

namespace detail {

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace detail

/// Mean logistic loss + (reg/2)|w|^2 at params = (w_1..w_d, b); the bias is
/// not penalized. Writes the gradient into `grad`.
inline double binary_probe_objective(const Matrix& x, std::span<const int> y, double reg, std::span<const double> params,
                                     std::span<double> grad) {
    const std::size_t n = x.rows(), d = x.cols();
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    const double b = params[d];
    for (std::size_t i = 0; i < n; ++i) {
        const double z = dot(x.row(i), params.subspan(0, d)) + b;
        const double s = y[i] == 1 ? 1.0 : -1.0;
        loss += detail::softplus(-s * z);
        const double r = detail::sigmoid(z) - (y[i] == 1 ? 1.0 : 0.0);
        const auto xi = x.row(i);
        for (std::size_t j = 0; j < d; ++j) grad[j] += r * xi[j];
        grad[d] += r;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    loss *= inv_n;
    for (auto& g : grad) g *= inv_n;
    double wn = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        wn += params[j] * params[j];
        grad[j] += reg * params[j];
    }
    return loss + 0.5 * reg * wn;
}

inline ProbeModel train_binary_probe(const Matrix& x, std::span<const int> y, double reg, double tol = 1e-8,
                                     int max_iter = 2000, OptMethod method = OptMethod::lbfgs) {
    const std::size_t n = x.rows(), d = x.cols();
    require(n >= 2, Errc::invalid_argument, "probe needs at least two samples");
    require(y.size() == n, Errc::dimension_mismatch, "label count differs from sample count");
    require(reg > 0.0, Errc::invalid_argument, "reg must be positive");
    require(all_finite(x.data()), Errc::non_finite, "probe features contain NaN or Inf");
    bool has0 = false, has1 = false;
    for (int v : y) {
        require(v == 0 || v == 1, Errc::invalid_argument, "binary labels must be 0 or 1");
        (v ? has1 : has0) = true;
    }
    require(has0 && has1, Errc::invalid_argument, "probe needs both classes present");

    OptimizeOptions opts;
    opts.method = method;
    opts.grad_tol = tol;
    opts.max_iter = max_iter;
    auto f = [&](const Vector& p, Vector& g) { return binary_probe_objective(x, y, reg, p, g); };
    const auto res = minimize(f, Vector(d + 1, 0.0), opts);

    ProbeModel m;
    m.weights.assign(res.x.begin(), res.x.begin() + static_cast<std::ptrdiff_t>(d));
    m.bias = res.x[d];
    m.reg_strength = reg;
    m.converged = res.converged;
    m.iterations = res.iterations;
    m.objective_trace = res.trace;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += m.predict(x.row(i)) == y[i];
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return m;
}

inline ConceptVector probe_concept(const ProbeModel& m, std::string concept_id, std::size_t n_pairs) {
    ConceptVector cv;
    cv.concept_id = std::move(concept_id);
    cv.method = ConceptMethod::probe;
    cv.v = m.weights;
    cv.n_pairs_used = n_pairs;
    cv.refresh_zero_energy();
    return cv;
}

// ---------------------------------------------------------------------------
// Persistence: rows of an SGT1 [N, d] tensor plus a JSON sidecar.

inline nlohmann::ordered_json concept_meta_json(const ConceptVector& cv) {
    nlohmann::ordered_json j;
    j["concept_id"] = cv.concept_id;
    j["method"] = to_string(cv.method);
    j["n_pairs_used"] = cv.n_pairs_used;
    j["zero_energy"] = cv.zero_energy;
    if (!cv.model_id.empty()) j["model_id"] = cv.model_id;
    return j;
}

inline void save_concepts(std::span<const ConceptVector> cvs, const std::filesystem::path& tensor_path,
                          const std::filesystem::path& sidecar_path) {
    require(!cvs.empty(), Errc::invalid_argument, "no concept vectors to save");
    const std::size_t d = cvs.front().v.size();
    Matrix m(cvs.size(), d);
    nlohmann::ordered_json meta = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < cvs.size(); ++i) {
        require(cvs[i].v.size() == d, Errc::dimension_mismatch, "concept vectors differ in dimension");
        for (std::size_t j = 0; j < d; ++j) m(i, j) = cvs[i].v[j];
        meta.push_back(concept_meta_json(cvs[i]));
    }
    save_tensor(m, tensor_path);
    write_text(sidecar_path, meta.dump(2) + "\n");
}

inline std::vector<ConceptVector> load_concepts(const std::filesystem::path& tensor_path,
                                                const std::filesystem::path& sidecar_path) {
    const Matrix m = load_matrix(tensor_path);
    nlohmann::ordered_json meta;
    try {
        meta = nlohmann::ordered_json::parse(read_text(sidecar_path));
    } catch (const nlohmann::ordered_json::exception& e) {
        fail(Errc::schema, std::string("concept sidecar: ") + e.what());
    }
    if (!meta.is_array() || meta.size() != m.rows()) fail(Errc::schema, "concept sidecar does not match tensor rows");
    std::vector<ConceptVector> out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto& j = meta[i];
        ConceptVector cv;
        try {
            cv.concept_id = j.at("concept_id").get<std::string>();
            cv.method = parse_method(j.at("method").get<std::string>());
            cv.n_pairs_used = j.at("n_pairs_used").get<std::size_t>();
            cv.zero_energy = j.at("zero_energy").get<bool>();
            if (j.contains("model_id")) cv.model_id = j.at("model_id").get<std::string>();
        } catch (const nlohmann::ordered_json::exception& e) {
            fail(Errc::schema, std::string("concept sidecar: ") + e.what());
        }
        cv.v = m.row_vector(i);
        out.push_back(std::move(cv));
    }
    return out;
}

} // namespace specgeo
