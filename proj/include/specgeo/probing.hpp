#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specgeo/error.hpp"
#include "specgeo/format.hpp"
#include "specgeo/linalg.hpp"
#include "specgeo/optimize.hpp"
#include "specgeo/random.hpp"
#include "specgeo/spectral.hpp"
#include "specgeo/stats.hpp"
#include "specgeo/tensor.hpp"

namespace specgeo {

inline constexpr std::size_t kDefaultMinTagCount = 30;

struct LabeledActivations {
    Matrix x;
    std::vector<int> labels;  // indices into tag_names
    std::vector<std::string> tag_names;
    std::size_t min_count_filter = 0;

    std::size_t n_classes() const noexcept { return tag_names.size(); }
};

/// Drop samples whose tag has fewer than `min_count` samples and renumber the
/// surviving tags in their original order.
inline LabeledActivations filter_rare_tags(const LabeledActivations& in, std::size_t min_count = kDefaultMinTagCount) {
    require(in.labels.size() == in.x.rows(), Errc::dimension_mismatch, "label count differs from sample count");
    std::vector<std::size_t> counts(in.tag_names.size(), 0);
    for (int l : in.labels) {
        require(l >= 0 && static_cast<std::size_t>(l) < counts.size(), Errc::invalid_argument, "label out of range");
        ++counts[static_cast<std::size_t>(l)];
    }
    std::vector<int> remap(counts.size(), -1);
    LabeledActivations out;
    out.min_count_filter = min_count;
    for (std::size_t t = 0; t < counts.size(); ++t)
        if (counts[t] >= min_count) {
            remap[t] = static_cast<int>(out.tag_names.size());
            out.tag_names.push_back(in.tag_names[t]);
        }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < in.labels.size(); ++i)
        if (remap[static_cast<std::size_t>(in.labels[i])] >= 0) {
            keep.push_back(i);
            out.labels.push_back(remap[static_cast<std::size_t>(in.labels[i])]);
        }
    out.x = keep.empty() ? Matrix(0, in.x.cols()) : in.x.select_rows(keep);
    return out;
}

/// Activations tensor plus a JSON label file {"labels": [...], "tag_names": [...]}.
inline LabeledActivations load_labeled(const std::filesystem::path& tensor_path, const std::filesystem::path& label_path) {
    LabeledActivations out;
    out.x = load_matrix(tensor_path);
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(read_text(label_path));
        out.labels = j.at("labels").get<std::vector<int>>();
        out.tag_names = j.at("tag_names").get<std::vector<std::string>>();
    } catch (const nlohmann::ordered_json::exception& e) {
        fail(Errc::schema, std::string("label file: ") + e.what());
    }
    require(out.labels.size() == out.x.rows(), Errc::dimension_mismatch, "label count differs from activation rows");
    for (int l : out.labels)
        require(l >= 0 && static_cast<std::size_t>(l) < out.tag_names.size(), Errc::schema, "label out of range");
    return out;
}

inline void save_labeled(const LabeledActivations& data, const std::filesystem::path& tensor_path,
                         const std::filesystem::path& label_path) {
    save_tensor(data.x, tensor_path);
    nlohmann::ordered_json j;
    j["labels"] = data.labels;
    j["tag_names"] = data.tag_names;
    write_text(label_path, j.dump() + "\n");
}

/// Column j of the result is X u_{indices[j]}.
inline Matrix project_subspace(const Matrix& x, const EigenSystem& eig, std::span<const std::size_t> indices) {
    require(x.cols() == eig.dim(), Errc::dimension_mismatch, "activation and eigenbasis dimensions differ");
    std::vector<bool> seen(eig.dim(), false);
    for (auto i : indices) {
        require(i < eig.dim(), Errc::invalid_argument, "subspace index out of range");
        require(!seen[i], Errc::invalid_argument, "subspace indices must be distinct");
        seen[i] = true;
    }
    return matmul(x, eig.vectors.select_cols(indices));
}

/// Fold id per sample. Each class is shuffled with the substream
/// derive_seed(seed, class) and dealt round robin; the dealing position
/// carries over between classes so fold sizes stay balanced overall.
inline std::vector<int> stratified_kfold(std::span<const int> labels, int k = 5, std::uint64_t seed = 0) {
    require(k >= 2, Errc::invalid_argument, "k must be >= 2");
    int n_classes = 0;
    for (int l : labels) {
        require(l >= 0, Errc::invalid_argument, "negative label");
        n_classes = std::max(n_classes, l + 1);
    }
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
    std::vector<int> fold(labels.size(), -1);
    std::size_t pos = 0;
    for (std::size_t c = 0; c < members.size(); ++c) {
        auto& m = members[c];
        if (m.empty()) continue;
        require(m.size() >= static_cast<std::size_t>(k), Errc::invalid_argument,
                "class " + std::to_string(c) + " has fewer samples than folds");
        Rng rng(derive_seed(seed, c));
        rng.shuffle(std::span<std::size_t>(m));
        for (auto i : m) fold[i] = static_cast<int>(pos++ % static_cast<std::size_t>(k));
    }
    return fold;
}

// ---------------------------------------------------------------------------
// Multiclass (softmax) logistic regression

struct MulticlassProbe {
    std::size_t n_classes = 0;
    std::size_t n_features = 0;
    Vector params;  // class c: weights at c*(p+1) .. c*(p+1)+p-1, bias at c*(p+1)+p
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;

    int predict(std::span<const double> x) const {
        int best = 0;
        double best_s = -INFINITY;
        const std::size_t stride = n_features + 1;
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double s = dot(std::span<const double>(params).subspan(c * stride, n_features), x) + params[c * stride + n_features];
            if (s > best_s) {
                best_s = s;
                best = static_cast<int>(c);
            }
        }
        return best;
    }

    double accuracy(const Matrix& x, std::span<const int> y) const {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) ok += predict(x.row(i)) == y[i];
        return x.rows() ? static_cast<double>(ok) / static_cast<double>(x.rows()) : 0.0;
    }
};

/// Mean cross entropy + (1 / (2 C n)) sum_c |w_c|^2; intercepts unpenalized.
inline double multiclass_objective(const Matrix& x, std::span<const int> y, std::size_t n_classes, double c_inv_strength,
                                   std::span<const double> params, std::span<double> grad) {
    const std::size_t n = x.rows(), p = x.cols(), stride = p + 1;
    std::fill(grad.begin(), grad.end(), 0.0);
    Vector z(n_classes);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.row(i);
        double zmax = -INFINITY;
        for (std::size_t c = 0; c < n_classes; ++c) {
            z[c] = dot(params.subspan(c * stride, p), xi) + params[c * stride + p];
            zmax = std::max(zmax, z[c]);
        }
        double se = 0.0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            z[c] = std::exp(z[c] - zmax);
            se += z[c];
        }
        const auto yi = static_cast<std::size_t>(y[i]);
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double prob = z[c] / se;
            const double r = prob - (c == yi ? 1.0 : 0.0);
            double* g = grad.data() + c * stride;
            for (std::size_t j = 0; j < p; ++j) g[j] += r * xi[j];
            g[p] += r;
        }
        loss += -std::log(z[yi] / se);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const double reg = 1.0 / (c_inv_strength * static_cast<double>(n));
    double wn = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c)
        for (std::size_t j = 0; j < p; ++j) {
            const double w = params[c * stride + j];
            wn += w * w;
            grad[c * stride + j] = grad[c * stride + j] * inv_n + reg * w;
        }
    for (std::size_t c = 0; c < n_classes; ++c) grad[c * stride + p] *= inv_n;
    return loss * inv_n + 0.5 * reg * wn;
}

struct MulticlassOptions {
    double c = 1.0;
    int max_iter = 2000;
    double tol = 1e-6;
    OptMethod method = OptMethod::lbfgs;
};

inline MulticlassProbe train_multiclass_probe(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                                              const MulticlassOptions& opts = {}) {
    require(x.rows() == y.size(), Errc::dimension_mismatch, "label count differs from sample count");
    require(x.rows() >= 1, Errc::invalid_argument, "probe needs samples");
    require(all_finite(x.data()), Errc::non_finite, "probe features contain NaN or Inf");
    require(opts.c > 0.0, Errc::invalid_argument, "C must be positive");
    std::vector<bool> present(n_classes, false);
    for (int l : y) {
        require(l >= 0 && static_cast<std::size_t>(l) < n_classes, Errc::invalid_argument, "label out of range");
        present[static_cast<std::size_t>(l)] = true;
    }
    require(std::count(present.begin(), present.end(), true) >= 2, Errc::invalid_argument,
            "probe needs at least two classes");

    MulticlassProbe probe;
    probe.n_classes = n_classes;
    probe.n_features = x.cols();
    OptimizeOptions oo;
    oo.method = opts.method;
    oo.max_iter = opts.max_iter;
    oo.grad_tol = opts.tol;
    auto f = [&](const Vector& w, Vector& g) { return multiclass_objective(x, y, n_classes, opts.c, w, g); };
    const auto res = minimize(f, Vector(n_classes * (x.cols() + 1), 0.0), oo);
    probe.params = res.x;
    probe.converged = res.converged;
    probe.iterations = res.iterations;
    probe.objective = res.value;
    return probe;
}

/// Out-of-fold predictions: correctness per sample and accuracy per fold.
struct CvOutcome {
    std::vector<double> correct;  // 0/1 per sample
    std::vector<double> fold_acc;
    double accuracy = 0.0;
    bool all_converged = true;
};

inline CvOutcome cross_validate(const Matrix& x, std::span<const int> y, std::size_t n_classes, std::span<const int> folds,
                                int k, const MulticlassOptions& opts = {}) {
    CvOutcome out;
    out.correct.assign(x.rows(), 0.0);
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < x.rows(); ++i) (folds[i] == f ? te : tr).push_back(i);
        require(!te.empty() && !tr.empty(), Errc::invalid_argument, "empty fold");
        std::vector<int> ytr;
        for (auto i : tr) ytr.push_back(y[i]);
        const auto probe = train_multiclass_probe(x.select_rows(tr), ytr, n_classes, opts);
        out.all_converged = out.all_converged && probe.converged;
        std::size_t ok = 0;
        for (auto i : te) {
            const bool hit = probe.predict(x.row(i)) == y[i];
            out.correct[i] = hit ? 1.0 : 0.0;
            ok += hit;
        }
        out.fold_acc.push_back(static_cast<double>(ok) / static_cast<double>(te.size()));
    }
    out.accuracy = mean(out.correct);
    return out;
}

// ---------------------------------------------------------------------------
// Top-k vs bottom-k subspace experiment

struct ProbeGapConfig {
    int n_folds = 5;
    std::size_t n_random_subspaces = 5;
    std::size_t n_resamples = kDefaultResamples;
    MulticlassOptions probe;
    std::uint64_t seed = 0;
};

struct ProbeGapResult {
    double fraction = 0.0;
    std::size_t k = 0;
    double acc_top = 0.0, acc_bottom = 0.0, acc_random_k = 0.0, acc_full = 0.0;
    double gap = 0.0;
    double t_folds = 0.0;
    double p_folds = 1.0;
    BootstrapCI ci;
    double top_variance = 0.0, bottom_variance = 0.0;
    std::vector<double> fold_acc_top, fold_acc_bottom;
    bool all_converged = true;
};

namespace detail {

struct SharedProbeRun {
    std::vector<int> folds;
    std::optional<CvOutcome> full;
};

inline ProbeGapResult gap_at_fraction(const LabeledActivations& data, const EigenSystem& eig, double fraction,
                                      const ProbeGapConfig& cfg, SharedProbeRun& shared) {
    const std::size_t d = eig.dim();
    const auto part = partition_indices(d, fraction);
    const std::size_t nc = data.n_classes();
    ProbeGapResult r;
    r.fraction = fraction;
    r.k = part.k;

    const auto top = cross_validate(project_subspace(data.x, eig, part.top), data.labels, nc, shared.folds, cfg.n_folds, cfg.probe);
    const auto bottom =
        cross_validate(project_subspace(data.x, eig, part.bottom), data.labels, nc, shared.folds, cfg.n_folds, cfg.probe);
    double rand_acc = 0.0;
    bool conv = top.all_converged && bottom.all_converged;
    for (std::size_t s = 0; s < cfg.n_random_subspaces; ++s) {
        const Matrix q = haar_orthogonal(d, derive_seed(cfg.seed, 1, s)).q;
        std::vector<std::size_t> first(part.k);
        std::iota(first.begin(), first.end(), 0);
        const auto rk = cross_validate(matmul(data.x, q.select_cols(first)), data.labels, nc, shared.folds, cfg.n_folds, cfg.probe);
        rand_acc += rk.accuracy;
        conv = conv && rk.all_converged;
    }
    if (!shared.full) shared.full = cross_validate(data.x, data.labels, nc, shared.folds, cfg.n_folds, cfg.probe);
    conv = conv && shared.full->all_converged;

    r.acc_top = top.accuracy;
    r.acc_bottom = bottom.accuracy;
    r.acc_random_k = cfg.n_random_subspaces ? rand_acc / static_cast<double>(cfg.n_random_subspaces) : 0.0;
    r.acc_full = shared.full->accuracy;
    r.gap = r.acc_top - r.acc_bottom;
    r.fold_acc_top = top.fold_acc;
    r.fold_acc_bottom = bottom.fold_acc;
    const auto t = paired_t(top.fold_acc, bottom.fold_acc);
    r.t_folds = t.statistic;
    r.p_folds = t.p_value;
    std::vector<double> diff(top.correct.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = top.correct[i] - bottom.correct[i];
    r.ci = bootstrap_ci(diff, cfg.n_resamples, 0.95, derive_seed(cfg.seed, 2));
    const double tr = eig.trace();
    for (auto i : part.top) r.top_variance += eig.values[i] / tr;
    for (auto i : part.bottom) r.bottom_variance += eig.values[i] / tr;
    r.all_converged = conv;
    return r;
}

inline SharedProbeRun prepare_run(const LabeledActivations& data, const EigenSystem& eig, const ProbeGapConfig& cfg) {
    require(data.x.cols() == eig.dim(), Errc::dimension_mismatch, "activation and eigenbasis dimensions differ");
    require(data.labels.size() == data.x.rows(), Errc::dimension_mismatch, "label count differs from sample count");
    SharedProbeRun run;
    run.folds = stratified_kfold(data.labels, cfg.n_folds, derive_seed(cfg.seed, 0));
    return run;
}

} // namespace detail

/// Probes on the top-k, bottom-k, random-k and full spaces under one fold
/// assignment. p_folds is a paired t over fold accuracies (top vs bottom);
/// ci bootstraps the per-token correctness difference.
inline ProbeGapResult pos_gap_experiment(const LabeledActivations& data, const EigenSystem& eig, double fraction = 0.1,
                                         const ProbeGapConfig& cfg = {}) {
    auto run = detail::prepare_run(data, eig, cfg);
    return detail::gap_at_fraction(data, eig, fraction, cfg, run);
}

inline std::vector<ProbeGapResult> k_sensitivity_sweep(const LabeledActivations& data, const EigenSystem& eig,
                                                       std::span<const double> fractions, const ProbeGapConfig& cfg = {}) {
    require(!fractions.empty(), Errc::invalid_argument, "no fractions given");
    auto run = detail::prepare_run(data, eig, cfg);
    std::vector<ProbeGapResult> out;
    for (double f : fractions) out.push_back(detail::gap_at_fraction(data, eig, f, cfg, run));
    return out;
}

inline nlohmann::ordered_json to_json(const ProbeGapResult& r) {
    nlohmann::ordered_json j;
    j["fraction"] = r.fraction;
    j["k"] = r.k;
    j["acc_top"] = r.acc_top;
    j["acc_bottom"] = r.acc_bottom;
    j["gap"] = r.gap;
    j["t_folds"] = number_json(r.t_folds);
    j["p_folds"] = r.p_folds;
    j["ci"] = to_json(r.ci);
    j["acc_random_k"] = r.acc_random_k;
    j["acc_full"] = r.acc_full;
    j["top_variance_fraction"] = r.top_variance;
    j["bottom_variance_fraction"] = r.bottom_variance;
    j["fold_acc_top"] = r.fold_acc_top;
    j["fold_acc_bottom"] = r.fold_acc_bottom;
    j["all_converged"] = r.all_converged;
    return j;
}

/// One row per (model, fraction): the single-fraction table when there is one
/// fraction, the sensitivity table blocks otherwise.
inline std::string probe_gap_csv(std::span<const ProbeGapResult> rs, const std::string& model_id) {
    CsvWriter w({"model_id", "fraction", "k", "acc_top", "acc_bottom", "gap", "p_folds", "ci_low", "ci_high",
                 "acc_random_k", "acc_full", "top_variance_fraction", "bottom_variance_fraction"});
    for (const auto& r : rs)
        w.row({model_id, format_double(r.fraction), std::to_string(r.k), format_double(r.acc_top),
               format_double(r.acc_bottom), format_double(r.gap), format_double(r.p_folds), format_double(r.ci.low),
               format_double(r.ci.high), format_double(r.acc_random_k), format_double(r.acc_full),
               format_double(r.top_variance), format_double(r.bottom_variance)});
    return w.str();
}

} // namespace specgeo
