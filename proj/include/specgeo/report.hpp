#pragma once

#include <algorithm>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "specgeo/error.hpp"
#include "specgeo/format.hpp"
#include "specgeo/spectral.hpp"
#include "specgeo/stats.hpp"

namespace specgeo {

struct NamedProfile {
    std::string series_id;
    SpectralProfile profile;
};

/// Curve rows (series_id, k, V_k, C_k), each series starting at the origin.
inline std::string plot_curves_csv(std::span<const NamedProfile> profiles) {
    CsvWriter w({"series_id", "k", "V_k", "C_k"});
    for (const auto& [id, p] : profiles) {
        w.row({id, "0", "0", "0"});
        for (std::size_t i = 0; i < p.dim(); ++i)
            w.row({id, std::to_string(i + 1), format_double(p.cum_variance[i]), format_double(p.cum_energy[i])});
    }
    return w.str();
}

/// Baseline band rows (k, V_k, C_low, C_high): 5th and 95th percentiles of
/// C_k across the baseline profiles.
inline std::string plot_band_csv(std::span<const SpectralProfile> baselines, double low_q = 0.05, double high_q = 0.95) {
    require(!baselines.empty(), Errc::invalid_argument, "no baseline profiles");
    const std::size_t d = baselines.front().dim();
    CsvWriter w({"k", "V_k", "C_low", "C_high"});
    w.row({"0", "0", "0", "0"});
    std::vector<double> col(baselines.size());
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t b = 0; b < baselines.size(); ++b) {
            require(baselines[b].dim() == d, Errc::dimension_mismatch, "baseline profiles differ in dimension");
            col[b] = baselines[b].cum_energy[i];
        }
        std::sort(col.begin(), col.end());
        w.row({std::to_string(i + 1), format_double(baselines.front().cum_variance[i]),
               format_double(quantile_sorted(col, low_q)), format_double(quantile_sorted(col, high_q))});
    }
    return w.str();
}

/// Write curve and band files next to each other.
inline void emit_plot_data(std::span<const NamedProfile> profiles, std::span<const SpectralProfile> baselines,
                           const std::filesystem::path& curves_path, const std::filesystem::path& band_path) {
    write_text(curves_path, plot_curves_csv(profiles));
    if (!baselines.empty()) write_text(band_path, plot_band_csv(baselines));
}

/// Scalar leaves of a JSON document as (dotted path, text) pairs, in document
/// order. Arrays of scalars longer than `max_array` are skipped.
inline void flatten_json(const nlohmann::ordered_json& j, const std::string& prefix,
                         std::vector<std::pair<std::string, std::string>>& out, std::size_t max_array = 16) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten_json(v, prefix.empty() ? k : prefix + "." + k, out, max_array);
    } else if (j.is_array()) {
        if (j.size() > max_array) return;
        for (std::size_t i = 0; i < j.size(); ++i) flatten_json(j[i], prefix + "[" + std::to_string(i) + "]", out, max_array);
    } else if (j.is_number_float()) {
        out.emplace_back(prefix, format_double(j.get<double>()));
    } else if (j.is_string()) {
        out.emplace_back(prefix, j.get<std::string>());
    } else if (!j.is_null()) {
        out.emplace_back(prefix, j.dump());
    } else {
        out.emplace_back(prefix, "");
    }
}

/// Merge reports into {"reports": [{"source": name, "report": ...}, ...]}
/// and a long-format CSV (source, key, value).
struct MergedReport {
    nlohmann::ordered_json json;
    std::string csv;
};

inline MergedReport merge_reports(std::span<const std::pair<std::string, nlohmann::ordered_json>> reports) {
    MergedReport m;
    m.json["reports"] = nlohmann::ordered_json::array();
    CsvWriter w({"source", "key", "value"});
    for (const auto& [name, j] : reports) {
        m.json["reports"].push_back({{"source", name}, {"report", j}});
        std::vector<std::pair<std::string, std::string>> flat;
        flatten_json(j, "", flat);
        for (const auto& [k, v] : flat) w.row({name, k, v});
    }
    m.csv = w.str();
    return m;
}

inline nlohmann::ordered_json read_json(const std::filesystem::path& path) {
    try {
        return nlohmann::ordered_json::parse(read_text(path));
    } catch (const nlohmann::ordered_json::parse_error& e) {
        fail(Errc::schema, path.string() + " is not valid JSON: " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

} // namespace specgeo
