#pragma once

// Generators with planted spectral structure and known ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "specgeo/concepts.hpp"
#include "specgeo/covariance.hpp"
#include "specgeo/linalg.hpp"
#include "specgeo/manifest.hpp"
#include "specgeo/probing.hpp"
#include "specgeo/random.hpp"
#include "specgeo/spectral.hpp"
#include "specgeo/steering.hpp"
#include "specgeo/transport.hpp"

namespace specgeo {

using ordered_json = nlohmann::ordered_json;

/// lambda_i = i^-decay (lambda_1 = 1) in a Haar-random basis.
inline LanguageCovariance gen_planted_spectrum(std::size_t d, double decay, std::uint64_t seed) {
    require(d >= 4, Errc::invalid_argument, "planted spectrum needs d >= 4");
    require(decay >= 0.0 && std::isfinite(decay), Errc::invalid_argument, "decay must be >= 0");
    Vector values(d);
    for (std::size_t i = 0; i < d; ++i) values[i] = std::pow(static_cast<double>(i + 1), -decay);
    return covariance_from_spectrum(values, haar_orthogonal(d, seed).q);
}

/// Unit vectors with a fraction `leakage` of their energy outside the bottom
/// floor(tail_fraction * d) eigenvectors (at least one). Vector i draws from
/// the substream derive_seed(seed, i).
inline std::vector<ConceptVector> gen_tail_concepts(const EigenSystem& eig, std::size_t n, double tail_fraction,
                                                    std::uint64_t seed, double leakage = 0.0) {
    const std::size_t d = eig.dim();
    require(tail_fraction > 0.0 && tail_fraction <= 1.0, Errc::invalid_argument, "tail_fraction must be in (0, 1]");
    require(leakage >= 0.0 && leakage <= 1.0, Errc::invalid_argument, "leakage must be in [0, 1]");
    const std::size_t k_tail =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(tail_fraction * static_cast<double>(d) + 1e-9)));
    const std::size_t head = d - k_tail;
    std::vector<ConceptVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        Vector tail(d, 0.0), rest(d, 0.0);
        for (std::size_t j = head; j < d; ++j) tail[j] = rng.normal();
        for (std::size_t j = 0; j < head; ++j) rest[j] = rng.normal();
        const double tn = norm(tail), rn = norm(rest);
        Vector coef(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            coef[j] = std::sqrt(1.0 - leakage) * tail[j] / tn;
            if (rn > 0.0) coef[j] += std::sqrt(leakage) * rest[j] / rn;
        }
        ConceptVector cv;
        cv.concept_id = "tail_" + std::to_string(i);
        cv.method = ConceptMethod::diff_of_means;
        cv.v = matvec(eig.vectors, coef);
        cv.n_pairs_used = 1;
        cv.refresh_zero_energy();
        out.push_back(std::move(cv));
    }
    return out;
}

enum class GeometryMode {
    planted,         // covariances match the anchors; WCA recovers exactly
    shared_identity, // both covariances are I; WCA equals naive
    unrelated        // covariances are independent of the anchors (the null)
};

struct SharedGeometry {
    TransportUnit unit;
    Matrix rotation;  // planted whitened-space rotation
    GeometryMode mode = GeometryMode::planted;
    ordered_json truth;
};

/// Two spaces related by a rotation R in whitened coordinates:
///   X_src = Z H_src^{1/2},  X_tgt = Z R H_tgt^{1/2}
///   v_src = H_src^{1/2} z,  v_tgt = H_tgt^{1/2} R^T z
/// with Z, z standard Gaussian and H_* planted spectra with different Haar
/// bases. The reported covariances are H_* (planted), I (shared_identity) or
/// fresh Haar-basis matrices with the spectrum of H_* (unrelated).
inline SharedGeometry gen_shared_geometry(std::size_t d, std::size_t n_anchors, std::size_t n_concepts, std::uint64_t seed,
                                          GeometryMode mode = GeometryMode::planted, double decay = 1.0) {
    require(n_anchors >= 1 && n_concepts >= 1, Errc::invalid_argument, "need anchors and concepts");
    SharedGeometry g;
    g.mode = mode;
    const bool identity = mode == GeometryMode::shared_identity;
    const LanguageCovariance h_src =
        identity ? covariance_from_spectrum(Vector(d, 1.0), Matrix::identity(d)) : gen_planted_spectrum(d, decay, derive_seed(seed, 1));
    const LanguageCovariance h_tgt =
        identity ? covariance_from_spectrum(Vector(d, 1.0), Matrix::identity(d)) : gen_planted_spectrum(d, decay, derive_seed(seed, 2));
    g.rotation = haar_orthogonal(d, derive_seed(seed, 3)).q;
    const Matrix root_src = mat_power_sym(h_src.eig, 0.5);
    const Matrix root_tgt = mat_power_sym(h_tgt.eig, 0.5);

    Rng zr(derive_seed(seed, 4));
    Matrix z(n_anchors, d);
    for (auto& x : z.data()) x = zr.normal();
    g.unit.x_src = matmul(z, root_src);
    g.unit.x_tgt = matmul(matmul(z, g.rotation), root_tgt);

    const Matrix rt = g.rotation.transposed();
    Rng cr(derive_seed(seed, 5));
    for (std::size_t c = 0; c < n_concepts; ++c) {
        const Vector zc = cr.normal_vector(d);
        g.unit.concepts.push_back(
            {"concept_" + std::to_string(c), matvec(root_src, zc), matvec(root_tgt, matvec(rt, zc))});
    }
    if (mode == GeometryMode::unrelated) {
        g.unit.cov_src = fake_sigma(h_src, derive_seed(seed, 6));
        g.unit.cov_tgt = fake_sigma(h_tgt, derive_seed(seed, 7));
    } else {
        g.unit.cov_src = h_src;
        g.unit.cov_tgt = h_tgt;
    }
    g.unit.pair_id = "synthetic_" + std::to_string(seed);

    g.truth["generator"] = "shared_geometry";
    g.truth["mode"] = mode == GeometryMode::planted ? "planted" : (identity ? "shared_identity" : "unrelated");
    g.truth["d"] = d;
    g.truth["n_anchors"] = n_anchors;
    g.truth["n_concepts"] = n_concepts;
    g.truth["seed"] = seed;
    g.truth["decay"] = decay;
    g.truth["expected"] = mode == GeometryMode::unrelated ? "real and fake covariances exchangeable"
                                                          : "wca recovers v_tgt exactly";
    return g;
}

enum class PlantSubspace { top, bottom };

struct PosPlanted {
    LabeledActivations data;
    LanguageCovariance cov;
    ordered_json truth;
};

/// Isotropic Gaussian background plus class means living in the top or
/// bottom floor(plant_fraction * d) eigenvectors of a planted spectrum. Each
/// class mean has norm `snr`.
inline PosPlanted gen_pos_planted(std::size_t d, std::size_t n, std::size_t n_classes, PlantSubspace subspace, double snr,
                                  std::uint64_t seed, double plant_fraction = 0.1, double decay = 1.0) {
    require(n_classes >= 2, Errc::invalid_argument, "need at least two classes");
    require(n >= n_classes, Errc::invalid_argument, "need at least one sample per class");
    require(snr >= 0.0, Errc::invalid_argument, "snr must be >= 0");
    PosPlanted out;
    out.cov = gen_planted_spectrum(d, decay, derive_seed(seed, 1));
    const auto part = partition_indices(d, plant_fraction);
    const auto& idx = subspace == PlantSubspace::top ? part.top : part.bottom;

    Rng mr(derive_seed(seed, 2));
    Matrix means(n_classes, d);
    for (std::size_t c = 0; c < n_classes; ++c) {
        Vector coef = mr.normal_vector(idx.size());
        const double cn = norm(coef);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const double a = cn > 0.0 ? snr * coef[j] / cn : 0.0;
            for (std::size_t r = 0; r < d; ++r) means(c, r) += a * out.cov.eig.vectors(r, idx[j]);
        }
    }
    Rng xr(derive_seed(seed, 3));
    out.data.x = Matrix(n, d);
    out.data.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % n_classes;
        out.data.labels[i] = static_cast<int>(c);
        for (std::size_t r = 0; r < d; ++r) out.data.x(i, r) = means(c, r) + xr.normal();
    }
    for (std::size_t c = 0; c < n_classes; ++c) out.data.tag_names.push_back("TAG" + std::to_string(c));

    out.truth["generator"] = "pos_planted";
    out.truth["d"] = d;
    out.truth["n"] = n;
    out.truth["n_classes"] = n_classes;
    out.truth["subspace"] = subspace == PlantSubspace::top ? "top" : "bottom";
    out.truth["snr"] = snr;
    out.truth["plant_fraction"] = plant_fraction;
    out.truth["plant_k"] = part.k;
    out.truth["seed"] = seed;
    out.truth["expected_gap_sign"] = snr == 0.0 ? 0 : (subspace == PlantSubspace::top ? 1 : -1);
    return out;
}

struct PlantedVocabulary {
    Manifest manifest;  // file_refs left empty; the caller writes tensors
    Matrix w_u;
    Matrix concept_directions;  // one unit row per concept
    ordered_json truth;
};

struct VocabularyOptions {
    std::size_t d = 32;
    std::size_t vocab = 2000;
    std::size_t n_concepts = 4;
    std::size_t pairs_per_concept = 20;
    double mean_scale = 3.0;      // norm of the shared row offset
    double concept_scale = 5.0;   // half the contrast length along a concept direction
    double concept_noise = 0.1;   // noise scale on concept rows
};

/// Token rows mu + g with g ~ N(0, I) share an offset mu. Concept word pairs
/// sit at mu +- a u_c (plus small noise) with u_c orthonormal and orthogonal
/// to mu, so that concept contrasts carry extra variance along u_c while
/// random-pair differences cancel mu. Each concept also gets one pair with a
/// multi-token word, which contrast extraction must skip.
inline PlantedVocabulary gen_planted_vocabulary(const VocabularyOptions& o, std::uint64_t seed) {
    const std::size_t d = o.d;
    const std::size_t concept_rows = 2 * o.n_concepts * o.pairs_per_concept;
    require(d >= o.n_concepts + 2, Errc::invalid_argument, "dimension too small for the concept count");
    require(o.vocab >= concept_rows + 2 * o.n_concepts + 2, Errc::invalid_argument, "vocabulary too small");
    const Matrix basis = haar_orthogonal(d, derive_seed(seed, 1)).q;
    const Vector mu = scaled(basis.col_vector(0), o.mean_scale);

    PlantedVocabulary pv;
    pv.concept_directions = Matrix(o.n_concepts, d);
    for (std::size_t c = 0; c < o.n_concepts; ++c)
        for (std::size_t r = 0; r < d; ++r) pv.concept_directions(c, r) = basis(r, c + 1);

    Rng rng(derive_seed(seed, 2));
    pv.w_u = Matrix(o.vocab, d);
    Manifest& m = pv.manifest;
    m.model_id = "planted-vocabulary-" + std::to_string(seed);
    m.hidden_dim = d;
    m.vocab_size = o.vocab;
    std::size_t next = 0;
    for (std::size_t c = 0; c < o.n_concepts; ++c) {
        ConceptSpec spec;
        spec.concept_id = "concept_" + std::to_string(c);
        spec.category = ConceptCategory::semantic;
        for (std::size_t p = 0; p < o.pairs_per_concept; ++p) {
            const std::string wp = "c" + std::to_string(c) + "_pos_" + std::to_string(p);
            const std::string wn = "c" + std::to_string(c) + "_neg_" + std::to_string(p);
            for (int sign : {1, -1}) {
                const std::size_t id = next++;
                for (std::size_t r = 0; r < d; ++r)
                    pv.w_u(id, r) = mu[r] + sign * o.concept_scale * pv.concept_directions(c, r) + o.concept_noise * rng.normal();
                m.token_table.push_back({static_cast<std::int64_t>(id), sign > 0 ? wp : wn});
                m.word_tokens[sign > 0 ? wp : wn] = {static_cast<std::int64_t>(id)};
            }
            spec.pairs.emplace_back(wp, wn);
        }
        const std::string multi = "c" + std::to_string(c) + "_multi";
        const std::string single = "c" + std::to_string(c) + "_single";
        spec.pairs.emplace_back(multi, single);
        m.concepts.push_back(std::move(spec));
        // Placeholder ids for the skipped pair; rows are ordinary noise rows.
        m.word_tokens[multi] = {static_cast<std::int64_t>(concept_rows + 2 * c), static_cast<std::int64_t>(concept_rows + 2 * c + 1)};
        m.word_tokens[single] = {static_cast<std::int64_t>(concept_rows + 2 * c)};
    }
    for (std::size_t id = next; id < o.vocab; ++id) {
        for (std::size_t r = 0; r < d; ++r) pv.w_u(id, r) = mu[r] + rng.normal();
        m.token_table.push_back({static_cast<std::int64_t>(id), "tok" + std::to_string(id)});
    }

    pv.truth["generator"] = "planted_vocabulary";
    pv.truth["d"] = d;
    pv.truth["vocab"] = o.vocab;
    pv.truth["n_concepts"] = o.n_concepts;
    pv.truth["pairs_per_concept"] = o.pairs_per_concept;
    pv.truth["mean_scale"] = o.mean_scale;
    pv.truth["concept_scale"] = o.concept_scale;
    pv.truth["seed"] = seed;
    pv.truth["expected"] = {{"concept_gini_sign", 1}, {"null_gini_sign", -1}};
    return pv;
}

struct SteeringPlan {
    std::string model_id = "synthetic-model";
    std::size_t n_concepts = 27;
    std::vector<double> alphas{10.0};
    double delta = 10.0;        // planted mean of shout - whisper, percent points
    double sigma = 10.0;        // sd of the per-concept difference
    double base_increase = 150.0;
    double base_spread = 30.0;
    std::size_t n_zero_energy = 0;  // the last concepts; their runs leave perplexity unchanged
    /// Standardize the per-concept noise to sample mean 0 and sample sd 1, so
    /// that the sample Cohen's d equals delta / sigma.
    bool exact_moments = true;
    double ppl_base = 10.0;
};

inline std::vector<SteeringLog> gen_steering_logs(const SteeringPlan& plan, std::uint64_t seed) {
    const std::size_t n_active = plan.n_concepts - std::min(plan.n_zero_energy, plan.n_concepts);
    std::vector<SteeringLog> logs;
    for (std::size_t ai = 0; ai < plan.alphas.size(); ++ai) {
        Rng rng(derive_seed(seed, ai));
        Vector noise = rng.normal_vector(n_active);
        Vector base = rng.normal_vector(n_active);
        if (plan.exact_moments && n_active >= 2) {
            const double m = mean(noise), s = sample_sd(noise);
            for (auto& x : noise) x = (x - m) / s;
        }
        for (std::size_t c = 0; c < plan.n_concepts; ++c) {
            double whisper = 0.0, shout = 0.0, middle = 0.0;
            if (c < n_active) {
                whisper = plan.base_increase + plan.base_spread * base[c];
                shout = whisper + plan.delta + plan.sigma * noise[c];
                middle = 0.5 * (whisper + shout);
            }
            const double full = shout + whisper + middle;
            const std::pair<Component, double> comps[] = {{Component::shout, shout},
                                                          {Component::middle, middle},
                                                          {Component::whisper, whisper},
                                                          {Component::full, full}};
            for (const auto& [comp, inc] : comps) {
                SteeringLog l;
                l.model_id = plan.model_id;
                l.concept_id = "concept_" + std::to_string(c);
                l.alpha = plan.alphas[ai];
                l.component = comp;
                l.ppl_base = plan.ppl_base;
                l.ppl_steered = plan.ppl_base * (1.0 + inc / 100.0);
                require(l.ppl_steered > 0.0, Errc::invalid_argument, "planted perplexity increase below -100%");
                l.kl = c < n_active ? std::abs(inc) / 100.0 : 0.0;
                logs.push_back(std::move(l));
            }
        }
    }
    return logs;
}

} // namespace specgeo
