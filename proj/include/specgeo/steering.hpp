#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "specgeo/error.hpp"
#include "specgeo/format.hpp"
#include "specgeo/stats.hpp"

namespace specgeo {

enum class Component { shout, middle, whisper, full };

inline std::string to_string(Component c) {
    switch (c) {
    case Component::shout: return "shout";
    case Component::middle: return "middle";
    case Component::whisper: return "whisper";
    case Component::full: return "full";
    }
    return "full";
}

inline Component parse_component(const std::string& s) {
    for (auto c : {Component::shout, Component::middle, Component::whisper, Component::full})
        if (to_string(c) == s) return c;
    fail(Errc::schema, "unknown steering component '" + s + "'");
}

/// One externally measured steering run.
struct SteeringLog {
    std::string model_id;
    std::string concept_id;
    double alpha = 0.0;
    Component component = Component::full;
    double ppl_base = 1.0;
    double ppl_steered = 1.0;
    std::optional<double> kl;
    std::optional<double> concept_shift;
    std::optional<int> layer;
};

inline double ppl_ratio(const SteeringLog& log) {
    require(log.ppl_base > 0.0 && log.ppl_steered > 0.0, Errc::invalid_argument, "perplexities must be positive");
    return log.ppl_steered / log.ppl_base;
}

/// Percent change: 100 (steered / base - 1).
inline double ppl_increase(const SteeringLog& log) { return 100.0 * (ppl_ratio(log) - 1.0); }

inline const std::vector<std::string>& steering_csv_header() {
    static const std::vector<std::string> h{"model_id", "concept_id", "alpha", "component",
                                            "ppl_base", "ppl_steered", "kl", "concept_shift"};
    return h;
}

/// Parse and validate a steering log CSV. An optional trailing `layer`
/// column is accepted; kl and concept_shift may be empty.
inline std::vector<SteeringLog> parse_steering_csv(std::string_view text) {
    const auto rows = parse_csv(text);
    require(!rows.empty(), Errc::schema, "steering log is empty");
    const auto& header = rows.front();
    const auto& expected = steering_csv_header();
    const bool has_layer = header.size() == expected.size() + 1;
    require(header.size() == expected.size() || has_layer, Errc::schema, "steering log header has the wrong width");
    for (std::size_t i = 0; i < expected.size(); ++i)
        require(header[i] == expected[i], Errc::schema, "steering log header mismatch at '" + header[i] + "'");
    if (has_layer) require(header.back() == "layer", Errc::schema, "unexpected extra steering log column");

    std::vector<SteeringLog> out;
    std::set<std::tuple<std::string, std::string, double, int, int>> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        const std::string where = " (row " + std::to_string(r + 1) + ")";
        require(f.size() == header.size(), Errc::schema, "steering log row has the wrong width" + where);
        SteeringLog log;
        log.model_id = f[0];
        log.concept_id = f[1];
        log.alpha = parse_double(f[2]);
        log.component = parse_component(f[3]);
        log.ppl_base = parse_double(f[4]);
        log.ppl_steered = parse_double(f[5]);
        require(std::isfinite(log.alpha), Errc::schema, "alpha must be finite" + where);
        require(std::isfinite(log.ppl_base) && log.ppl_base > 0.0 && std::isfinite(log.ppl_steered) && log.ppl_steered > 0.0,
                Errc::schema, "perplexities must be positive and finite" + where);
        if (!f[6].empty()) {
            log.kl = parse_double(f[6]);
            require(std::isfinite(*log.kl) && *log.kl >= 0.0, Errc::schema, "kl must be >= 0" + where);
        }
        if (!f[7].empty()) log.concept_shift = parse_double(f[7]);
        if (has_layer && !f[8].empty()) log.layer = static_cast<int>(parse_double(f[8]));
        const auto key = std::make_tuple(log.model_id, log.concept_id, log.alpha, static_cast<int>(log.component),
                                         log.layer.value_or(-1));
        require(seen.insert(key).second, Errc::schema, "duplicate steering record" + where);
        out.push_back(std::move(log));
    }
    return out;
}

inline std::string steering_csv(std::span<const SteeringLog> logs) {
    bool any_layer = std::any_of(logs.begin(), logs.end(), [](const SteeringLog& l) { return l.layer.has_value(); });
    auto header = steering_csv_header();
    if (any_layer) header.push_back("layer");
    CsvWriter w(header);
    for (const auto& l : logs) {
        std::vector<std::string> f{l.model_id,
                                   l.concept_id,
                                   format_double(l.alpha),
                                   to_string(l.component),
                                   format_double(l.ppl_base),
                                   format_double(l.ppl_steered),
                                   l.kl ? format_double(*l.kl) : "",
                                   l.concept_shift ? format_double(*l.concept_shift) : ""};
        if (any_layer) f.push_back(l.layer ? std::to_string(*l.layer) : "");
        w.row(f);
    }
    return w.str();
}

/// Concepts to leave out of the paired analysis, per model. An empty model
/// id applies to every model.
class ExclusionSet {
public:
    void add(std::string model_id, std::string concept_id) { items_.emplace(std::move(model_id), std::move(concept_id)); }
    bool contains(const std::string& model_id, const std::string& concept_id) const {
        return items_.count({model_id, concept_id}) || items_.count({std::string{}, concept_id});
    }
    bool empty() const noexcept { return items_.empty(); }

private:
    std::set<std::pair<std::string, std::string>> items_;
};

struct AsymmetryReport {
    std::string model_id;
    double alpha = 0.0;
    double mean_ppl_increase_shout = 0.0;    // percent
    double mean_ppl_increase_whisper = 0.0;  // percent
    double mean_ratio_shout = 0.0;
    double mean_ratio_whisper = 0.0;
    std::optional<double> cohens_d;
    std::optional<double> t_stat;
    std::optional<double> p_value;
    std::size_t n_effective = 0;
    std::size_t n_excluded = 0;  // zero-energy plus unpaired
    std::size_t n_unpaired = 0;
    std::vector<std::string> warnings;
};

/// Paired shout-minus-whisper statistics over the concepts of one model at
/// one alpha. Layers, when present, are averaged per concept first.
inline AsymmetryReport asymmetry_analysis(std::span<const SteeringLog> logs, const std::string& model_id, double alpha,
                                          const ExclusionSet& excluded = {}) {
    AsymmetryReport rep;
    rep.model_id = model_id;
    rep.alpha = alpha;
    struct Acc {
        double inc = 0.0, ratio = 0.0;
        std::size_t n = 0;
    };
    std::map<std::string, std::pair<Acc, Acc>> by_concept;  // shout, whisper
    std::set<std::string> concepts;
    for (const auto& l : logs) {
        if (l.model_id != model_id || l.alpha != alpha) continue;
        concepts.insert(l.concept_id);
        if (l.component != Component::shout && l.component != Component::whisper) continue;
        auto& slot = l.component == Component::shout ? by_concept[l.concept_id].first : by_concept[l.concept_id].second;
        slot.inc += ppl_increase(l);
        slot.ratio += ppl_ratio(l);
        ++slot.n;
    }

    std::vector<double> shout, whisper, shout_ratio, whisper_ratio;
    for (const auto& c : concepts) {
        if (excluded.contains(model_id, c)) {
            ++rep.n_excluded;
            continue;
        }
        auto it = by_concept.find(c);
        if (it == by_concept.end() || it->second.first.n == 0 || it->second.second.n == 0) {
            ++rep.n_excluded;
            ++rep.n_unpaired;
            continue;
        }
        const auto& [s, w] = it->second;
        shout.push_back(s.inc / static_cast<double>(s.n));
        whisper.push_back(w.inc / static_cast<double>(w.n));
        shout_ratio.push_back(s.ratio / static_cast<double>(s.n));
        whisper_ratio.push_back(w.ratio / static_cast<double>(w.n));
    }
    if (rep.n_unpaired) rep.warnings.push_back(std::to_string(rep.n_unpaired) + " concept(s) lack a shout/whisper pair");
    rep.n_effective = shout.size();
    if (rep.n_effective == 0) fail(Errc::invalid_argument, "no shout/whisper pairs for model '" + model_id + "'");
    rep.mean_ppl_increase_shout = mean(shout);
    rep.mean_ppl_increase_whisper = mean(whisper);
    rep.mean_ratio_shout = mean(shout_ratio);
    rep.mean_ratio_whisper = mean(whisper_ratio);
    if (rep.n_effective < 2) {
        rep.warnings.push_back("t test and Cohen's d undefined with one paired concept");
        return rep;
    }
    rep.cohens_d = cohens_d_paired(shout, whisper);
    const auto t = paired_t(shout, whisper);
    rep.t_stat = t.statistic;
    rep.p_value = t.p_value;
    if (t.zero_variance) rep.warnings.push_back("zero-variance differences");
    return rep;
}

/// asymmetry_analysis for every model in the logs at each requested alpha
/// that the model has records for.
inline std::vector<AsymmetryReport> sweep_report(std::span<const SteeringLog> logs, std::span<const double> alphas,
                                                 const ExclusionSet& excluded, std::vector<std::string>* warnings = nullptr) {
    std::set<std::string> models;
    std::set<std::pair<std::string, double>> present;
    for (const auto& l : logs) {
        models.insert(l.model_id);
        present.emplace(l.model_id, l.alpha);
    }
    std::vector<AsymmetryReport> out;
    for (const auto& m : models)
        for (double a : alphas)
            if (present.count({m, a})) out.push_back(asymmetry_analysis(logs, m, a, excluded));
    if (out.empty() && warnings) warnings->push_back("no requested alpha occurs in the steering logs");
    return out;
}

inline nlohmann::ordered_json to_json(const AsymmetryReport& r) {
    auto opt = [](const std::optional<double>& x) { return x ? number_json(*x) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["model_id"] = r.model_id;
    j["alpha"] = r.alpha;
    j["mean_ppl_increase_shout"] = r.mean_ppl_increase_shout;
    j["mean_ppl_increase_whisper"] = r.mean_ppl_increase_whisper;
    j["mean_ratio_shout"] = r.mean_ratio_shout;
    j["mean_ratio_whisper"] = r.mean_ratio_whisper;
    j["cohens_d"] = opt(r.cohens_d);
    j["t_stat"] = opt(r.t_stat);
    j["p_value"] = opt(r.p_value);
    j["n_effective"] = r.n_effective;
    j["n_excluded"] = r.n_excluded;
    j["n_unpaired"] = r.n_unpaired;
    j["warnings"] = r.warnings;
    return j;
}

inline std::string asymmetry_csv(std::span<const AsymmetryReport> rs) {
    auto opt = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string{}; };
    CsvWriter w({"model_id", "alpha", "n_effective", "n_excluded", "mean_ppl_increase_shout",
                 "mean_ppl_increase_whisper", "mean_ratio_shout", "mean_ratio_whisper", "cohens_d", "t_stat", "p_value"});
    for (const auto& r : rs)
        w.row({r.model_id, format_double(r.alpha), std::to_string(r.n_effective), std::to_string(r.n_excluded),
               format_double(r.mean_ppl_increase_shout), format_double(r.mean_ppl_increase_whisper),
               format_double(r.mean_ratio_shout), format_double(r.mean_ratio_whisper), opt(r.cohens_d), opt(r.t_stat),
               opt(r.p_value)});
    return w.str();
}

} // namespace specgeo
