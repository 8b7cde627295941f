#pragma once

// Command-line driver. Every subcommand writes its outputs under --out-dir
// and embeds its full configuration in the JSON report.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "specgeo/concepts.hpp"
#include "specgeo/covariance.hpp"
#include "specgeo/error.hpp"
#include "specgeo/format.hpp"
#include "specgeo/manifest.hpp"
#include "specgeo/probing.hpp"
#include "specgeo/report.hpp"
#include "specgeo/script.hpp"
#include "specgeo/spectral.hpp"
#include "specgeo/stats.hpp"
#include "specgeo/steering.hpp"
#include "specgeo/synthetic.hpp"
#include "specgeo/tensor.hpp"
#include "specgeo/transport.hpp"

namespace specgeo {

namespace fs = std::filesystem;

struct GlobalOptions {
    std::uint64_t seed = 0;
    double lambda = kDefaultLambda;
    double fraction = 0.1;
    std::string out_dir = "specgeo_out";
};

namespace cli {

using ojson = nlohmann::ordered_json;

inline ojson config_json(const GlobalOptions& g, const std::string& command) {
    ojson c;
    c["command"] = command;
    c["seed"] = g.seed;
    c["lambda"] = g.lambda;
    c["fraction"] = g.fraction;
    c["conventions"] = {{"eigen_order", "descending"},
                        {"eigvec_sign", "largest-magnitude entry positive"},
                        {"gini", "trapezoid area over (0,0),(V_k,C_k) minus 0.5"},
                        {"scm", "first V_k with C_k >= 0.5"},
                        {"partition_k", "floor(fraction * d)"},
                        {"script_rule", "strict majority of non-Common characters, ties Mixed"},
                        {"transport", "v_tgt = S_tgt^{1/2} R^T S_src^{-1/2} v_src, X_src R ~ X_tgt"}};
    return c;
}

inline fs::path out_path(const GlobalOptions& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / name;
}

inline fs::path default_sidecar(const fs::path& tensor) {
    fs::path p = tensor;
    p.replace_extension(".json");
    return p;
}

inline std::vector<std::int64_t> all_ids(std::size_t n) {
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

inline std::vector<std::int64_t> token_subset(const Manifest& m, const std::string& script) {
    if (script.empty()) return all_ids(m.vocab_size);
    auto ids = script_filter(m.token_table, parse_script(script));
    require(!ids.empty(), Errc::invalid_argument, "no tokens of script '" + script + "'");
    return ids;
}

/// Σ from an explicit file, the manifest's sigma ref, or the unembedding.
inline LanguageCovariance manifest_sigma(const Manifest& m, const GlobalOptions& g, const std::string& sigma_path,
                                         const std::string& script, std::string& source) {
    if (!sigma_path.empty()) {
        source = sigma_path;
        return covariance_from_matrix(load_matrix(sigma_path));
    }
    if (m.has_ref("sigma") && script.empty()) {
        source = "file_ref:sigma";
        return covariance_from_matrix(m.load("sigma"));
    }
    source = "unembedding";
    const auto subset = token_subset(m, script);
    return build_sigma(m.load("unembedding"), subset, g.lambda);
}

// ---------------------------------------------------------------------------

struct SpectralArgs {
    std::string manifest, sigma, vectors, sidecar, script;
    std::size_t n_baseline = 1000;
    std::size_t n_suites = 9999;
};

inline int cmd_spectral(const GlobalOptions& g, const SpectralArgs& a, std::ostream& out) {
    std::optional<Manifest> m;
    if (!a.manifest.empty()) m = load_manifest(a.manifest);
    require(m || !a.sigma.empty(), Errc::invalid_argument, "spectral needs --manifest or --sigma");
    std::string source;
    const LanguageCovariance cov = m ? manifest_sigma(*m, g, a.sigma, a.script, source)
                                     : (source = a.sigma, covariance_from_matrix(load_matrix(a.sigma)));

    std::vector<ConceptVector> cvs;
    if (!a.vectors.empty()) {
        cvs = load_concepts(a.vectors, a.sidecar.empty() ? default_sidecar(a.vectors) : fs::path(a.sidecar));
    } else {
        require(m && m->has_ref("concepts"), Errc::invalid_argument, "no concept vectors: pass --vectors or a manifest concepts ref");
        const Matrix rows = m->load("concepts");
        const fs::path side = default_sidecar(m->ref("concepts"));
        if (fs::exists(side)) {
            cvs = load_concepts(m->ref("concepts"), side);
        } else {
            for (std::size_t i = 0; i < rows.rows(); ++i) {
                ConceptVector cv;
                cv.concept_id = i < m->concepts.size() ? m->concepts[i].concept_id : "row_" + std::to_string(i);
                cv.v = rows.row_vector(i);
                cv.n_pairs_used = 1;
                cv.refresh_zero_energy();
                cvs.push_back(std::move(cv));
            }
        }
    }
    std::vector<Vector> vs;
    for (const auto& cv : cvs) vs.push_back(cv.v);
    const ProfileBatch batch = profile_batch(vs, cov.eig);
    require(!batch.profiles.empty(), Errc::invalid_argument, "every concept vector has zero energy");
    const auto baselines = random_baseline_profiles(cov.eig, a.n_baseline, derive_seed(g.seed, 1));

    std::vector<double> base_scm, base_gini, scm, gini;
    for (const auto& p : baselines) {
        base_scm.push_back(p.scm);
        base_gini.push_back(p.gini);
    }
    for (const auto& p : batch.profiles) {
        scm.push_back(p.scm);
        gini.push_back(p.gini);
    }
    const std::size_t n = batch.profiles.size();
    const auto null_scm = resampled_suite_means(base_scm, n, a.n_suites, derive_seed(g.seed, 2));
    const auto null_gini = resampled_suite_means(base_gini, n, a.n_suites, derive_seed(g.seed, 3));
    const double gap = scm_gap(batch.profiles, baselines);
    const double p_scm = monte_carlo_p(mean(scm), null_scm, Direction::greater);
    const double p_gini = monte_carlo_p(mean(gini), null_gini, Direction::two_sided);

    ojson rep;
    rep["config"] = config_json(g, "spectral");
    rep["config"]["sigma_source"] = source;
    rep["config"]["n_baseline"] = a.n_baseline;
    rep["config"]["n_suites"] = a.n_suites;
    if (!a.script.empty()) rep["config"]["script"] = a.script;
    rep["model_id"] = m ? m->model_id : "";
    rep["d"] = cov.dim();
    rep["condition_number"] = number_json(condition_number(cov));
    rep["summary"] = {{"n_concepts", n},
                      {"n_excluded", batch.n_excluded},
                      {"mean_gini", mean(gini)},
                      {"mean_scm", mean(scm)},
                      {"baseline_mean_gini", mean(base_gini)},
                      {"baseline_mean_scm", mean(base_scm)},
                      {"scm_gap", gap},
                      {"p_scm_gap", p_scm},
                      {"p_gini", p_gini}};
    rep["concepts"] = ojson::array();

    CsvWriter w({"concept_id", "gini", "scm", "energy_top", "energy_middle", "energy_bottom"});
    std::vector<NamedProfile> named;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& cv = cvs[batch.kept[i]];
        const auto& p = batch.profiles[i];
        const auto split = split_vector(cv.v, cov.eig, g.fraction);
        ojson c{{"concept_id", cv.concept_id}, {"gini", p.gini}, {"scm", p.scm}, {"degenerate", p.degenerate},
                {"energy_fractions", split.energy_fractions}};
        rep["concepts"].push_back(c);
        w.row({cv.concept_id, format_double(p.gini), format_double(p.scm), format_double(split.energy_fractions[0]),
               format_double(split.energy_fractions[1]), format_double(split.energy_fractions[2])});
        named.push_back({cv.concept_id, p});
    }
    write_json(out_path(g, "spectral.json"), rep);
    w.save(out_path(g, "spectral.csv"));
    emit_plot_data(named, baselines, out_path(g, "plot_curves.csv"), out_path(g, "plot_band.csv"));
    out << "spectral: " << n << " concepts, mean gini " << format_double(mean(gini)) << ", scm gap "
        << format_double(gap) << ", p " << format_double(p_scm) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct DualArgs {
    std::string manifest, script;
    std::size_t n_null = kDefaultNullSize;
    std::size_t n_suites = 9999;
};

inline int cmd_dual(const GlobalOptions& g, const DualArgs& a, std::ostream& out) {
    const Manifest m = load_manifest(a.manifest);
    const Matrix w_u = m.load("unembedding");
    const auto subset = token_subset(m, a.script);
    const LanguageCovariance cov = build_sigma(w_u, subset, g.lambda);

    ojson rep;
    rep["config"] = config_json(g, "dual");
    rep["config"]["n_null"] = a.n_null;
    rep["config"]["n_suites"] = a.n_suites;
    rep["config"]["n_tokens"] = subset.size();
    if (!a.script.empty()) rep["config"]["script"] = a.script;
    rep["model_id"] = m.model_id;
    rep["concepts"] = ojson::array();

    std::vector<double> concept_gini;
    std::size_t excluded = 0;
    for (const auto& spec : m.concepts) {
        const ConceptVector cv = unembed_contrast(spec, m, w_u);
        ojson c{{"concept_id", cv.concept_id}, {"n_pairs_used", cv.n_pairs_used}, {"zero_energy", cv.zero_energy}};
        if (cv.zero_energy || cv.n_pairs_used == 0) {
            ++excluded;
            c["gini"] = nullptr;
        } else {
            const double gi = spectral_profile(cv.v, cov.eig).gini;
            concept_gini.push_back(gi);
            c["gini"] = gi;
        }
        rep["concepts"].push_back(c);
    }
    require(!concept_gini.empty(), Errc::invalid_argument, "no concept has a usable contrast");

    std::vector<double> null_gini;
    for (const auto& cv : random_pair_null(w_u, subset, a.n_null, derive_seed(g.seed, 1)))
        if (!cv.zero_energy) null_gini.push_back(spectral_profile(cv.v, cov.eig).gini);
    const auto suites = resampled_suite_means(null_gini, concept_gini.size(), a.n_suites, derive_seed(g.seed, 2));
    const double cg = mean(concept_gini), rg = mean(null_gini);
    const double p = monte_carlo_p(cg, suites, Direction::greater);
    rep["summary"] = {{"random_gini", rg}, {"concept_gini", cg}, {"p_value", p}, {"n_concepts", concept_gini.size()},
                      {"n_excluded", excluded}, {"n_null", null_gini.size()}};

    CsvWriter w({"model_id", "random_gini", "concept_gini", "p_value", "n_concepts", "n_excluded"});
    w.row({m.model_id, format_double(rg), format_double(cg), format_double(p), std::to_string(concept_gini.size()),
           std::to_string(excluded)});
    write_json(out_path(g, "dual.json"), rep);
    w.save(out_path(g, "dual.csv"));
    out << "dual: concept gini " << format_double(cg) << ", random gini " << format_double(rg) << ", p "
        << format_double(p) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TransportArgs {
    std::string units_file;
    std::size_t n_seeds = 5;
};

/// Units file: {"units": [{"pair_id", "sigma_src", "sigma_tgt", "anchors_src",
/// "anchors_tgt", "concepts_src", "concepts_tgt", "concept_ids"?}]} with
/// tensor paths relative to the file.
inline std::vector<TransportUnit> load_transport_units(const fs::path& path, double lambda) {
    const ojson j = read_json(path);
    const fs::path base = path.parent_path();
    require(j.contains("units") && j["units"].is_array() && !j["units"].empty(), Errc::schema, "units file needs a non-empty 'units' array");
    std::vector<TransportUnit> units;
    for (const auto& u : j["units"]) {
        auto get = [&](const char* key) {
            require(u.contains(key) && u[key].is_string(), Errc::schema, std::string("transport unit missing '") + key + "'");
            return base / u[key].get<std::string>();
        };
        TransportUnit t;
        t.pair_id = u.value("pair_id", "pair_" + std::to_string(units.size()));
        t.cov_src = covariance_from_matrix(load_matrix(get("sigma_src")), lambda);
        t.cov_tgt = covariance_from_matrix(load_matrix(get("sigma_tgt")), lambda);
        t.x_src = load_matrix(get("anchors_src"));
        t.x_tgt = load_matrix(get("anchors_tgt"));
        const Matrix cs = load_matrix(get("concepts_src"));
        const Matrix ct = load_matrix(get("concepts_tgt"));
        require(cs.rows() == ct.rows(), Errc::dimension_mismatch, "concept tensors differ in row count");
        for (std::size_t i = 0; i < cs.rows(); ++i) {
            std::string id = "concept_" + std::to_string(i);
            if (u.contains("concept_ids")) id = u["concept_ids"].at(i).get<std::string>();
            t.concepts.push_back({id, cs.row_vector(i), ct.row_vector(i)});
        }
        units.push_back(std::move(t));
    }
    return units;
}

inline int cmd_transport(const GlobalOptions& g, const TransportArgs& a, std::ostream& out) {
    // Ridge is applied to the stored covariances only when --lambda is given
    // explicitly; see run_cli.
    const auto units = load_transport_units(a.units_file, g.lambda);
    const auto r = randomization_experiment(units, a.n_seeds, g.seed);
    ojson rep;
    rep["config"] = config_json(g, "transport");
    rep["config"]["n_seeds"] = a.n_seeds;
    rep["config"]["units_file"] = a.units_file;
    rep["report"] = to_json(r);
    CsvWriter w({"condition", "win_rate", "mean_delta", "t_stat", "p_value", "n"});
    auto opt = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string{}; };
    for (const auto& c : r.conditions)
        w.row({c.condition, format_double(c.win_rate), format_double(c.mean_delta), opt(c.t_stat), opt(c.p_value),
               std::to_string(c.n)});
    write_json(out_path(g, "transport.json"), rep);
    w.save(out_path(g, "transport.csv"));
    for (const auto& warn : r.warnings) out << "warning: " << warn << "\n";
    out << "transport: real vs fake p " << opt(r.primary_p()) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ProbeArgs {
    std::string acts, labels, sigma, manifest, model_id;
    std::vector<double> fractions;
    std::size_t min_count = kDefaultMinTagCount;
    std::size_t n_random = 5;
    std::size_t n_resamples = kDefaultResamples;
    int folds = 5;
    double c = 1.0;
};

inline int cmd_probe_pos(const GlobalOptions& g, const ProbeArgs& a, std::ostream& out) {
    const LabeledActivations raw = load_labeled(a.acts, a.labels);
    const LabeledActivations data = filter_rare_tags(raw, a.min_count);
    std::optional<Manifest> m;
    if (!a.manifest.empty()) m = load_manifest(a.manifest);
    std::string source;
    LanguageCovariance cov;
    if (m) {
        cov = manifest_sigma(*m, g, a.sigma, "", source);
    } else {
        require(!a.sigma.empty(), Errc::invalid_argument, "probe-pos needs --sigma or --manifest");
        source = a.sigma;
        cov = covariance_from_matrix(load_matrix(a.sigma));
    }
    require(cov.dim() == data.x.cols(), Errc::dimension_mismatch, "covariance and activation dimensions differ");
    ProbeGapConfig cfg;
    cfg.n_folds = a.folds;
    cfg.n_random_subspaces = a.n_random;
    cfg.n_resamples = a.n_resamples;
    cfg.probe.c = a.c;
    cfg.seed = g.seed;
    const std::vector<double> fractions = a.fractions.empty() ? std::vector<double>{g.fraction} : a.fractions;
    const auto results = k_sensitivity_sweep(data, cov.eig, fractions, cfg);
    const std::string model_id = !a.model_id.empty() ? a.model_id : (m ? m->model_id : "");

    ojson rep;
    rep["config"] = config_json(g, "probe-pos");
    rep["config"]["sigma_source"] = source;
    rep["config"]["fractions"] = fractions;
    rep["config"]["min_tag_count"] = a.min_count;
    rep["config"]["n_folds"] = a.folds;
    rep["config"]["n_random_subspaces"] = a.n_random;
    rep["config"]["n_resamples"] = a.n_resamples;
    rep["config"]["C"] = a.c;
    if (m && !m->extraction_point.empty()) rep["config"]["extraction_point"] = m->extraction_point;
    rep["model_id"] = model_id;
    rep["n_samples"] = data.x.rows();
    rep["n_dropped"] = raw.x.rows() - data.x.rows();
    rep["tags"] = data.tag_names;
    rep["results"] = ojson::array();
    for (const auto& r : results) rep["results"].push_back(to_json(r));
    write_json(out_path(g, "probe_pos.json"), rep);
    write_text(out_path(g, "probe_pos.csv"), probe_gap_csv(results, model_id));
    for (const auto& r : results)
        out << "probe-pos: fraction " << format_double(r.fraction) << " gap " << format_double(r.gap) << " p "
            << format_double(r.p_folds) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct SplitArgs {
    std::string logs, vectors, sidecar, sigma;
    std::vector<double> alphas;
};

inline int cmd_split(const GlobalOptions& g, const SplitArgs& a, std::ostream& out) {
    const auto logs = parse_steering_csv(read_text(a.logs));
    ExclusionSet excluded;
    ojson rep;
    rep["config"] = config_json(g, "split");
    rep["config"]["logs"] = a.logs;

    if (!a.vectors.empty()) {
        require(!a.sigma.empty(), Errc::invalid_argument, "--vectors needs --sigma");
        const auto cvs = load_concepts(a.vectors, a.sidecar.empty() ? default_sidecar(a.vectors) : fs::path(a.sidecar));
        const auto cov = covariance_from_matrix(load_matrix(a.sigma));
        CsvWriter w({"concept_id", "k", "energy_shout", "energy_middle", "energy_whisper", "zero_energy"});
        rep["vectors"] = ojson::array();
        for (const auto& cv : cvs) {
            const auto s = split_vector(cv.v, cov.eig, g.fraction);
            const bool zero = s.zero_energy || cv.zero_energy;
            if (zero) excluded.add(cv.model_id, cv.concept_id);
            w.row({cv.concept_id, std::to_string(s.k), format_double(s.energy_fractions[0]),
                   format_double(s.energy_fractions[1]), format_double(s.energy_fractions[2]), zero ? "true" : "false"});
            rep["vectors"].push_back({{"concept_id", cv.concept_id}, {"k", s.k}, {"energy_fractions", s.energy_fractions},
                                      {"zero_energy", zero}});
        }
        w.save(out_path(g, "split_vectors.csv"));
    }

    std::vector<double> alphas = a.alphas;
    if (alphas.empty()) {
        for (const auto& l : logs)
            if (std::find(alphas.begin(), alphas.end(), l.alpha) == alphas.end()) alphas.push_back(l.alpha);
        std::sort(alphas.begin(), alphas.end());
    }
    std::vector<std::string> warnings;
    const auto reports = sweep_report(logs, alphas, excluded, &warnings);
    rep["config"]["alphas"] = alphas;
    rep["reports"] = ojson::array();
    for (const auto& r : reports) {
        rep["reports"].push_back(to_json(r));
        for (const auto& w : r.warnings) warnings.push_back(r.model_id + " alpha " + format_double(r.alpha) + ": " + w);
    }
    rep["warnings"] = warnings;
    write_json(out_path(g, "split.json"), rep);
    write_text(out_path(g, "split.csv"), asymmetry_csv(reports));
    for (const auto& w : warnings) out << "warning: " << w << "\n";
    out << "split: " << reports.size() << " model/alpha rows\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string kind;
    std::size_t d = 64;
    std::size_t n = 3000;
    std::size_t n_concepts = 20;
    std::size_t n_classes = 13;
    std::size_t n_anchors = 200;
    std::size_t n_units = 4;
    std::size_t vocab = 2000;
    double decay = 1.0;
    double tail_fraction = 0.1;
    double leakage = 0.0;
    double snr = 3.0;
    double plant_fraction = 0.1;
    std::string subspace = "top";
    std::string mode = "planted";
    double delta = 10.0;
    double sigma = 10.0;
    std::size_t n_zero_energy = 0;
};

inline GeometryMode parse_mode(const std::string& s) {
    if (s == "planted") return GeometryMode::planted;
    if (s == "shared_identity") return GeometryMode::shared_identity;
    if (s == "unrelated") return GeometryMode::unrelated;
    fail(Errc::invalid_argument, "unknown geometry mode '" + s + "'");
}

inline Manifest basic_manifest(const std::string& model_id, std::size_t d, std::size_t vocab) {
    Manifest m;
    m.model_id = model_id;
    m.hidden_dim = d;
    m.vocab_size = vocab;
    for (std::size_t i = 0; i < vocab; ++i) m.token_table.push_back({static_cast<std::int64_t>(i), "tok" + std::to_string(i)});
    return m;
}

inline int cmd_synth(const GlobalOptions& g, const SynthArgs& a, std::ostream& out) {
    const fs::path dir = g.out_dir;
    fs::create_directories(dir);
    ojson truth;
    if (a.kind == "spectrum") {
        const auto cov = gen_planted_spectrum(a.d, a.decay, g.seed);
        save_tensor(cov.sigma, dir / "sigma.sgt");
        truth = {{"generator", "planted_spectrum"}, {"d", a.d}, {"decay", a.decay}, {"seed", g.seed},
                 {"eigenvalues", cov.eig.values}, {"condition_number", condition_number(cov)}};
    } else if (a.kind == "tail") {
        const auto cov = gen_planted_spectrum(a.d, a.decay, derive_seed(g.seed, 0));
        const auto cvs = gen_tail_concepts(cov.eig, a.n_concepts, a.tail_fraction, derive_seed(g.seed, 1), a.leakage);
        // W_U = sqrt(d) Λ^{1/2} Uᵀ reproduces Σ as its second moment.
        Matrix w_u(a.d, a.d);
        for (std::size_t i = 0; i < a.d; ++i)
            for (std::size_t j = 0; j < a.d; ++j)
                w_u(i, j) = std::sqrt(static_cast<double>(a.d) * cov.eig.values[i]) * cov.eig.vectors(j, i);
        save_tensor(w_u, dir / "unembedding.sgt");
        save_tensor(cov.sigma, dir / "sigma.sgt");
        save_concepts(cvs, dir / "concepts.sgt", dir / "concepts.json");
        Manifest m = basic_manifest("synthetic-tail-" + std::to_string(g.seed), a.d, a.d);
        for (const auto& cv : cvs) {
            ConceptSpec spec;
            spec.concept_id = cv.concept_id;
            spec.pairs.emplace_back("tok0", "tok1");
            m.concepts.push_back(spec);
        }
        m.file_refs["unembedding"] = fs::absolute(dir / "unembedding.sgt");
        m.file_refs["sigma"] = fs::absolute(dir / "sigma.sgt");
        m.file_refs["concepts"] = fs::absolute(dir / "concepts.sgt");
        save_manifest(m, dir / "manifest.json");
        std::vector<double> ginis;
        for (const auto& cv : cvs) ginis.push_back(spectral_profile(cv.v, cov.eig).gini);
        truth = {{"generator", "tail_concepts"}, {"d", a.d}, {"decay", a.decay}, {"tail_fraction", a.tail_fraction},
                 {"leakage", a.leakage}, {"n_concepts", a.n_concepts}, {"seed", g.seed},
                 {"expected_gini_sign", -1}, {"planted_gini", ginis}};
    } else if (a.kind == "shared") {
        ojson units = ojson::array();
        truth = {{"generator", "shared_geometry"}, {"mode", a.mode}, {"units", ojson::array()}};
        for (std::size_t u = 0; u < a.n_units; ++u) {
            const auto geo = gen_shared_geometry(a.d, a.n_anchors, a.n_concepts, derive_seed(g.seed, u), parse_mode(a.mode), a.decay);
            const std::string p = "unit" + std::to_string(u) + "_";
            Matrix cs(geo.unit.concepts.size(), a.d), ct(geo.unit.concepts.size(), a.d);
            ojson ids = ojson::array();
            for (std::size_t c = 0; c < geo.unit.concepts.size(); ++c) {
                for (std::size_t j = 0; j < a.d; ++j) {
                    cs(c, j) = geo.unit.concepts[c].v_src[j];
                    ct(c, j) = geo.unit.concepts[c].v_tgt[j];
                }
                ids.push_back(geo.unit.concepts[c].concept_id);
            }
            save_tensor(geo.unit.cov_src.sigma, dir / (p + "sigma_src.sgt"));
            save_tensor(geo.unit.cov_tgt.sigma, dir / (p + "sigma_tgt.sgt"));
            save_tensor(geo.unit.x_src, dir / (p + "anchors_src.sgt"));
            save_tensor(geo.unit.x_tgt, dir / (p + "anchors_tgt.sgt"));
            save_tensor(cs, dir / (p + "concepts_src.sgt"));
            save_tensor(ct, dir / (p + "concepts_tgt.sgt"));
            units.push_back({{"pair_id", geo.unit.pair_id},
                             {"sigma_src", p + "sigma_src.sgt"},
                             {"sigma_tgt", p + "sigma_tgt.sgt"},
                             {"anchors_src", p + "anchors_src.sgt"},
                             {"anchors_tgt", p + "anchors_tgt.sgt"},
                             {"concepts_src", p + "concepts_src.sgt"},
                             {"concepts_tgt", p + "concepts_tgt.sgt"},
                             {"concept_ids", ids}});
            truth["units"].push_back(geo.truth);
        }
        write_json(dir / "units.json", {{"units", units}});
    } else if (a.kind == "pos") {
        const PlantSubspace sub = a.subspace == "bottom" ? PlantSubspace::bottom : PlantSubspace::top;
        require(a.subspace == "top" || a.subspace == "bottom", Errc::invalid_argument, "--subspace must be top or bottom");
        const auto pp = gen_pos_planted(a.d, a.n, a.n_classes, sub, a.snr, g.seed, a.plant_fraction, a.decay);
        save_labeled(pp.data, dir / "acts.sgt", dir / "labels.json");
        save_tensor(pp.cov.sigma, dir / "sigma.sgt");
        truth = pp.truth;
    } else if (a.kind == "vocab") {
        VocabularyOptions o;
        o.d = a.d;
        o.vocab = a.vocab;
        o.n_concepts = std::min(a.n_concepts, a.d - 2);
        auto pv = gen_planted_vocabulary(o, g.seed);
        save_tensor(pv.w_u, dir / "unembedding.sgt");
        pv.manifest.file_refs["unembedding"] = fs::absolute(dir / "unembedding.sgt");
        save_manifest(pv.manifest, dir / "manifest.json");
        truth = pv.truth;
    } else if (a.kind == "steering") {
        SteeringPlan plan;
        plan.n_concepts = a.n_concepts;
        plan.delta = a.delta;
        plan.sigma = a.sigma;
        plan.n_zero_energy = a.n_zero_energy;
        const auto logs = gen_steering_logs(plan, g.seed);
        write_text(dir / "logs.csv", steering_csv(logs));
        // Matching concept vectors: the zero-energy concepts get zero rows.
        const auto cov = gen_planted_spectrum(a.d, a.decay, derive_seed(g.seed, 100));
        Rng rng(derive_seed(g.seed, 101));
        std::vector<ConceptVector> cvs;
        for (std::size_t c = 0; c < a.n_concepts; ++c) {
            ConceptVector cv;
            cv.concept_id = "concept_" + std::to_string(c);
            cv.model_id = plan.model_id;
            cv.v = rng.normal_vector(a.d);
            if (c + a.n_zero_energy >= a.n_concepts) cv.v.assign(a.d, 0.0);
            cv.n_pairs_used = 1;
            cv.refresh_zero_energy();
            cvs.push_back(std::move(cv));
        }
        save_concepts(cvs, dir / "vectors.sgt", dir / "vectors.json");
        save_tensor(cov.sigma, dir / "sigma.sgt");
        truth = {{"generator", "steering_logs"}, {"n_concepts", a.n_concepts}, {"delta", a.delta}, {"sigma", a.sigma},
                 {"n_zero_energy", a.n_zero_energy}, {"expected_cohens_d", a.delta / a.sigma}, {"seed", g.seed}};
    } else {
        fail(Errc::invalid_argument, "unknown synth kind '" + a.kind + "'");
    }
    write_json(dir / "truth.json", truth);
    out << "synth: wrote " << a.kind << " data to " << dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

inline int cmd_report(const GlobalOptions& g, const std::vector<std::string>& inputs, std::ostream& out) {
    std::vector<std::pair<std::string, ojson>> reports;
    for (const auto& p : inputs) reports.emplace_back(fs::path(p).filename().string(), read_json(p));
    const MergedReport merged = merge_reports(reports);
    write_json(out_path(g, "merged.json"), merged.json);
    write_text(out_path(g, "merged.csv"), merged.csv);
    out << "report: merged " << reports.size() << " reports\n";
    return 0;
}

} // namespace cli

/// Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using namespace cli;
    CLI::App app{"Spectral concept-geometry toolkit", "specgeo"};
    app.fallthrough();
    GlobalOptions g;
    bool lambda_given = false;
    app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
    app.add_option_function<double>(
           "--lambda", [&](double v) { g.lambda = v; lambda_given = true; }, "Covariance ridge (default 0.1)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--fraction", g.fraction, "Top/bottom subspace fraction")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();

    SpectralArgs sp;
    auto* c_spec = app.add_subcommand("spectral", "Energy profiles, Gini and SCM of concept vectors");
    c_spec->add_option("--manifest", sp.manifest, "Model manifest")->check(CLI::ExistingFile);
    c_spec->add_option("--sigma", sp.sigma, "Covariance tensor (overrides the manifest)")->check(CLI::ExistingFile);
    c_spec->add_option("--vectors", sp.vectors, "Concept vector tensor")->check(CLI::ExistingFile);
    c_spec->add_option("--sidecar", sp.sidecar, "Concept metadata JSON")->check(CLI::ExistingFile);
    c_spec->add_option("--script", sp.script, "Restrict the unembedding covariance to one script");
    c_spec->add_option("--n-baseline", sp.n_baseline, "Random baseline directions")->capture_default_str();
    c_spec->add_option("--n-suites", sp.n_suites, "Monte-Carlo null suites")->capture_default_str();

    DualArgs du;
    auto* c_dual = app.add_subcommand("dual", "Unembedding contrasts against a random-pair null");
    c_dual->add_option("--manifest", du.manifest, "Model manifest")->required()->check(CLI::ExistingFile);
    c_dual->add_option("--script", du.script, "Restrict tokens to one script");
    c_dual->add_option("--n-null", du.n_null, "Random pairs")->capture_default_str();
    c_dual->add_option("--n-suites", du.n_suites, "Monte-Carlo null suites")->capture_default_str();

    TransportArgs tr;
    auto* c_tr = app.add_subcommand("transport", "Real vs matched-spectrum covariance randomization");
    c_tr->add_option("--units", tr.units_file, "Units JSON")->required()->check(CLI::ExistingFile);
    c_tr->add_option("--n-seeds", tr.n_seeds, "Fake covariance seeds")->capture_default_str();

    ProbeArgs pr;
    auto* c_pr = app.add_subcommand("probe-pos", "Top-k vs bottom-k subspace probing");
    c_pr->add_option("--acts", pr.acts, "Activation tensor [N, d]")->required()->check(CLI::ExistingFile);
    c_pr->add_option("--labels", pr.labels, "Label JSON")->required()->check(CLI::ExistingFile);
    c_pr->add_option("--sigma", pr.sigma, "Covariance tensor")->check(CLI::ExistingFile);
    c_pr->add_option("--manifest", pr.manifest, "Model manifest")->check(CLI::ExistingFile);
    c_pr->add_option("--model-id", pr.model_id, "Model id for the tables");
    c_pr->add_option("--fractions", pr.fractions, "Comma-separated fractions")->delimiter(',');
    c_pr->add_option("--min-count", pr.min_count, "Minimum samples per tag")->capture_default_str();
    c_pr->add_option("--n-random", pr.n_random, "Random subspace draws")->capture_default_str();
    c_pr->add_option("--resamples", pr.n_resamples, "Bootstrap resamples")->capture_default_str();
    c_pr->add_option("--folds", pr.folds, "Cross-validation folds")->capture_default_str()->check(CLI::Range(2, 100));
    c_pr->add_option("--C", pr.c, "Inverse regularization strength")->capture_default_str()->check(CLI::PositiveNumber);

    SplitArgs sl;
    auto* c_split = app.add_subcommand("split", "Shout/whisper asymmetry from steering logs");
    c_split->add_option("--logs", sl.logs, "Steering log CSV")->required()->check(CLI::ExistingFile);
    c_split->add_option("--alphas", sl.alphas, "Comma-separated alphas (default: all)")->delimiter(',');
    c_split->add_option("--vectors", sl.vectors, "Concept vector tensor")->check(CLI::ExistingFile);
    c_split->add_option("--sidecar", sl.sidecar, "Concept metadata JSON")->check(CLI::ExistingFile);
    c_split->add_option("--sigma", sl.sigma, "Covariance tensor")->check(CLI::ExistingFile);

    SynthArgs sy;
    auto* c_syn = app.add_subcommand("synth", "Generate planted data with ground truth");
    c_syn->add_option("--kind", sy.kind, "spectrum|tail|shared|pos|vocab|steering")
        ->required()
        ->check(CLI::IsMember({"spectrum", "tail", "shared", "pos", "vocab", "steering"}));
    c_syn->add_option("--d", sy.d, "Dimension")->capture_default_str();
    c_syn->add_option("--n", sy.n, "Samples (pos)")->capture_default_str();
    c_syn->add_option("--n-concepts", sy.n_concepts, "Concepts")->capture_default_str();
    c_syn->add_option("--n-classes", sy.n_classes, "Classes (pos)")->capture_default_str();
    c_syn->add_option("--n-anchors", sy.n_anchors, "Anchors (shared)")->capture_default_str();
    c_syn->add_option("--n-units", sy.n_units, "Units (shared)")->capture_default_str();
    c_syn->add_option("--vocab", sy.vocab, "Vocabulary size (vocab)")->capture_default_str();
    c_syn->add_option("--decay", sy.decay, "Eigenvalue decay exponent")->capture_default_str();
    c_syn->add_option("--tail-fraction", sy.tail_fraction, "Tail fraction (tail)")->capture_default_str();
    c_syn->add_option("--leakage", sy.leakage, "Energy outside the tail (tail)")->capture_default_str();
    c_syn->add_option("--snr", sy.snr, "Signal-to-noise (pos)")->capture_default_str();
    c_syn->add_option("--plant-fraction", sy.plant_fraction, "Plant subspace fraction (pos)")->capture_default_str();
    c_syn->add_option("--subspace", sy.subspace, "top|bottom (pos)")->capture_default_str();
    c_syn->add_option("--mode", sy.mode, "planted|shared_identity|unrelated (shared)")->capture_default_str();
    c_syn->add_option("--delta", sy.delta, "Planted mean difference (steering)")->capture_default_str();
    c_syn->add_option("--sigma", sy.sigma, "Planted difference sd (steering)")->capture_default_str();
    c_syn->add_option("--n-zero-energy", sy.n_zero_energy, "Zero-energy concepts (steering)")->capture_default_str();

    std::vector<std::string> inputs;
    auto* c_rep = app.add_subcommand("report", "Merge JSON reports into one JSON and CSV");
    c_rep->add_option("--inputs", inputs, "Report JSON files")->required()->check(CLI::ExistingFile);

    if (argc <= 1) {
        err << app.help();
        return 1;
    }
    try {
        app.require_subcommand(1);
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (c_spec->parsed()) return cmd_spectral(g, sp, out);
        if (c_dual->parsed()) return cmd_dual(g, du, out);
        if (c_tr->parsed()) {
            GlobalOptions tg = g;
            if (!lambda_given) tg.lambda = 0.0;
            return cmd_transport(tg, tr, out);
        }
        if (c_pr->parsed()) return cmd_probe_pos(g, pr, out);
        if (c_split->parsed()) return cmd_split(g, sl, out);
        if (c_syn->parsed()) return cmd_synth(g, sy, out);
        if (c_rep->parsed()) return cmd_report(g, inputs, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.numerical() ? 2 : 1;
    } catch (const nlohmann::ordered_json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 1;
}

} // namespace specgeo
