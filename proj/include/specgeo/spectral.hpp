#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specgeo/error.hpp"
#include "specgeo/format.hpp"
#include "specgeo/linalg.hpp"
#include "specgeo/random.hpp"

namespace specgeo {

/// Below this eigenvalue gap individual energies depend on the solver's
/// choice of basis inside the degenerate block.
inline constexpr double kDegenerateGap = 1e-10;

/// Energy of a direction over an eigenbasis.
///
///   E_i  = (v.u_i)^2 / |v|^2
///   C(k) = E_1 + ... + E_k
///   V(k) = (l_1 + ... + l_k) / tr
///   gini = trapezoid area under (0,0),(V(1),C(1)),...,(V(d),C(d)) minus 1/2
///   scm  = V(k) for the first k with C(k) >= 1/2
struct SpectralProfile {
    Vector energies;
    Vector cum_energy;    // C(1..d)
    Vector cum_variance;  // V(1..d)
    double gini = 0.0;
    double scm = 1.0;
    bool degenerate = false;

    std::size_t dim() const noexcept { return energies.size(); }
};

namespace detail {

inline Vector cumulative_variance(const EigenSystem& eig) {
    const double tr = eig.trace();
    require(tr > 0.0 && std::isfinite(tr), Errc::invalid_argument, "eigenvalue trace must be positive");
    Vector v(eig.dim());
    double s = 0.0;
    for (std::size_t i = 0; i < eig.dim(); ++i) {
        s += eig.values[i];
        v[i] = s / tr;
    }
    v.back() = 1.0;
    return v;
}

inline SpectralProfile profile_from_coefficients(std::span<const double> coef, const Vector& cum_var, bool degenerate) {
    const std::size_t d = coef.size();
    double total = 0.0;
    for (double c : coef) total += c * c;
    if (!(total > 0.0)) fail(Errc::zero_vector, "spectral profile of a zero vector");
    SpectralProfile p;
    p.energies.resize(d);
    p.cum_energy.resize(d);
    p.cum_variance = cum_var;
    p.degenerate = degenerate;
    double c = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        p.energies[i] = coef[i] * coef[i] / total;
        c += p.energies[i];
        p.cum_energy[i] = c;
    }
    p.cum_energy.back() = 1.0;

    double area = 0.0, v_prev = 0.0, c_prev = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < d; ++i) {
        area += (p.cum_variance[i] - v_prev) * (p.cum_energy[i] + c_prev) * 0.5;
        v_prev = p.cum_variance[i];
        c_prev = p.cum_energy[i];
        if (!found && p.cum_energy[i] >= 0.5) {
            p.scm = p.cum_variance[i];
            found = true;
        }
    }
    p.gini = area - 0.5;
    return p;
}

} // namespace detail

inline SpectralProfile spectral_profile(std::span<const double> v, const EigenSystem& eig) {
    require(v.size() == eig.dim(), Errc::dimension_mismatch, "vector and eigenbasis dimensions differ");
    require(all_finite(v), Errc::non_finite, "vector contains NaN or Inf");
    const Vector coef = eig.project(v);
    return detail::profile_from_coefficients(coef, detail::cumulative_variance(eig), eig.min_gap() < kDegenerateGap);
}

/// Profiles of `n` directions drawn uniformly from the unit sphere. Draw i
/// uses the substream derive_seed(seed, i).
inline std::vector<SpectralProfile> random_baseline_profiles(const EigenSystem& eig, std::size_t n, std::uint64_t seed) {
    require(n >= 1, Errc::invalid_argument, "baseline needs n >= 1");
    const auto cum_var = detail::cumulative_variance(eig);
    const bool degenerate = eig.min_gap() < kDegenerateGap;
    std::vector<SpectralProfile> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        Vector g = rng.normal_vector(eig.dim());
        const double gn = norm(g);
        for (auto& x : g) x /= gn;
        out.push_back(detail::profile_from_coefficients(eig.project(g), cum_var, degenerate));
    }
    return out;
}

/// Index sets of a descending spectrum cut at k = floor(fraction * d).
struct Partition {
    std::size_t k = 0;
    std::vector<std::size_t> top, middle, bottom;
};

inline std::size_t partition_k(std::size_t d, double fraction) {
    require(fraction > 0.0 && fraction <= 0.5, Errc::invalid_argument, "fraction must be in (0, 0.5]");
    // The small offset keeps products such as 0.1 * 230 from flooring to 22.
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d) + 1e-9));
}

inline Partition partition_indices(std::size_t d, double fraction) {
    Partition p;
    p.k = partition_k(d, fraction);
    if (p.k < 1) fail(Errc::invalid_argument, "fraction too small for dimension " + std::to_string(d));
    for (std::size_t i = 0; i < d; ++i) {
        if (i < p.k)
            p.top.push_back(i);
        else if (i >= d - p.k)
            p.bottom.push_back(i);
        else
            p.middle.push_back(i);
    }
    return p;
}

struct SpectralSplit {
    Vector top, middle, bottom;
    std::array<double, 3> energy_fractions{0.0, 0.0, 0.0};
    std::size_t k = 0;
    bool zero_energy = false;
};

/// Project v onto the top-k, middle and bottom-k eigenvectors. A zero vector
/// returns zero components with zero_energy set.
inline SpectralSplit split_vector(std::span<const double> v, const EigenSystem& eig, double fraction) {
    const std::size_t d = eig.dim();
    require(v.size() == d, Errc::dimension_mismatch, "vector and eigenbasis dimensions differ");
    const Partition part = partition_indices(d, fraction);
    SpectralSplit s;
    s.k = part.k;
    s.top.assign(d, 0.0);
    s.middle.assign(d, 0.0);
    s.bottom.assign(d, 0.0);
    const Vector coef = eig.project(v);
    double total = 0.0;
    for (double c : coef) total += c * c;
    if (!(total > 0.0)) {
        s.zero_energy = true;
        return s;
    }
    double e_top = 0.0, e_bottom = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        Vector& dst = i < part.k ? s.top : (i >= d - part.k ? s.bottom : s.middle);
        const double c = coef[i];
        for (std::size_t r = 0; r < d; ++r) dst[r] += c * eig.vectors(r, i);
        if (i < part.k) e_top += c * c;
        if (i >= d - part.k) e_bottom += c * c;
    }
    e_top /= total;
    e_bottom /= total;
    s.energy_fractions = {e_top, 1.0 - e_top - e_bottom, e_bottom};
    return s;
}

inline double mean_scm(std::span<const SpectralProfile> ps) {
    require(!ps.empty(), Errc::invalid_argument, "empty profile list");
    double s = 0.0;
    for (const auto& p : ps) s += p.scm;
    return s / static_cast<double>(ps.size());
}

inline double mean_gini(std::span<const SpectralProfile> ps) {
    require(!ps.empty(), Errc::invalid_argument, "empty profile list");
    double s = 0.0;
    for (const auto& p : ps) s += p.gini;
    return s / static_cast<double>(ps.size());
}

/// mean(concept scm) - mean(baseline scm).
inline double scm_gap(std::span<const SpectralProfile> concepts, std::span<const SpectralProfile> baselines) {
    require(!concepts.empty() && !baselines.empty(), Errc::invalid_argument, "scm_gap needs non-empty lists");
    return mean_scm(concepts) - mean_scm(baselines);
}

/// Profiles of a batch of vectors; zero vectors are skipped and counted.
struct ProfileBatch {
    std::vector<SpectralProfile> profiles;
    std::vector<std::size_t> kept;  // input positions of `profiles`
    std::size_t n_excluded = 0;
};

inline ProfileBatch profile_batch(std::span<const Vector> vs, const EigenSystem& eig) {
    ProfileBatch b;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (norm(vs[i]) == 0.0) {
            ++b.n_excluded;
            continue;
        }
        b.profiles.push_back(spectral_profile(vs[i], eig));
        b.kept.push_back(i);
    }
    return b;
}

inline nlohmann::ordered_json profile_to_json(const SpectralProfile& p) {
    nlohmann::ordered_json j;
    j["d"] = p.dim();
    j["gini"] = p.gini;
    j["scm"] = p.scm;
    j["degenerate_spectrum"] = p.degenerate;
    j["energies"] = p.energies;
    j["cum_energy"] = p.cum_energy;
    j["cum_variance"] = p.cum_variance;
    j["conventions"] = {{"gini", "trapezoid over (0,0),(V_k,C_k), minus 0.5"},
                        {"scm", "first V_k with C_k >= 0.5, no interpolation"}};
    return j;
}

/// Columns k, V_k, C_k with the k = 0 origin row first.
inline std::string profile_csv(const SpectralProfile& p) {
    CsvWriter w({"k", "V_k", "C_k"});
    w.row({"0", "0", "0"});
    for (std::size_t i = 0; i < p.dim(); ++i)
        w.row({std::to_string(i + 1), format_double(p.cum_variance[i]), format_double(p.cum_energy[i])});
    return w.str();
}

} // namespace specgeo
