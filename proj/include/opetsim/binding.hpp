#pragma once

// Competitive receptor binding in the unsaturated regime.
//
// Model. A region carries one or more receptor populations, each with a site
// count S. Three ligand pools compete for those sites: the injected agonist
// (free concentration c_A), the injected antagonist (c_AA) and the
// endogenously secreted agonist (c_E). With per-population association
// strengths k, the occupied counts follow mass action on the free sites F:
//
//     b_i = F * c_i * k_i,      F = S - b_E   (exogenous pools are tracers)
//
// The injected pools are kept in the tracer regime by the saturation cap, so
// only the endogenous pool is allowed to deplete free sites. Solving for F
// gives the closed form used here:
//
//     b_i = S * c_i * k_i / (1 + c_E * k_E)
//
// Two properties of this form carry the rest of the simulator:
//   * bound exogenous ligand is exactly linear in the injected dose, and
//   * raising endogenous secretion strictly lowers every exogenous b_i while
//     leaving the agonist/antagonist proportion untouched.
//
// Any population whose total occupied fraction would exceed the saturation
// cap invalidates the regime and raises SaturationExceeded.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "opetsim/errors.hpp"

namespace opetsim {

enum class LigandRole { agonist, antagonist };
enum class DoseClass { threshold, subpharmacological };
enum class HotLigand { agonist, antagonist };

inline const char* to_string(DoseClass d) {
    return d == DoseClass::threshold ? "threshold" : "subpharmacological";
}
inline const char* to_string(HotLigand h) {
    return h == HotLigand::agonist ? "agonist" : "antagonist";
}

struct LigandSpec {
    std::string name;
    LigandRole role = LigandRole::agonist;
    // Relative association strength per receptor population id. Absent
    // populations bind nothing.
    std::map<std::string, double> affinity;
    // Analgesic effect per bound molecule; antagonists must keep this 0.
    double analgesic_potency = 0.0;

    double affinity_for(const std::string& population) const {
        auto it = affinity.find(population);
        return it == affinity.end() ? 0.0 : it->second;
    }

    // require_binding: at least one positive affinity must exist (true for
    // the injected pair; an endogenous ligand may bind nowhere).
    void validate(bool require_binding = true) const {
        bool any_positive = false;
        for (const auto& [pop, k] : affinity) {
            if (!(k >= 0.0) || !std::isfinite(k))
                throw RangeError("ligand '" + name + "': affinity for '" + pop +
                                 "' must be finite and >= 0");
            any_positive = any_positive || k > 0.0;
        }
        if (require_binding && !any_positive)
            throw RangeError("ligand '" + name + "': needs at least one positive affinity");
        if (!(analgesic_potency >= 0.0) || !std::isfinite(analgesic_potency))
            throw RangeError("ligand '" + name + "': analgesic_potency must be finite and >= 0");
        if (role == LigandRole::antagonist && analgesic_potency != 0.0)
            throw RangeError("ligand '" + name + "': an antagonist cannot carry analgesic_potency");
    }
};

struct RegionSpec {
    std::string id;
    std::map<std::string, long long> receptor_count;
    bool pain_responsive = false;
    // Current pain level in [0, 1]; drives endogenous secretion.
    double pain_intensity = 0.0;
    // Endogenous agonist concentration secreted per unit pain intensity.
    double secretion_per_intensity = 0.0;
    long long pixel_count = 64;

    // Secretion response: zero at zero intensity, nondecreasing in intensity.
    double endogenous_concentration() const { return secretion_per_intensity * pain_intensity; }

    long long total_receptors() const {
        long long total = 0;
        for (const auto& [pop, count] : receptor_count) total += count;
        return total;
    }

    void validate() const {
        if (id.empty()) throw RangeError("region id must be nonempty");
        if (receptor_count.empty())
            throw RangeError("region '" + id + "': needs at least one receptor population");
        for (const auto& [pop, count] : receptor_count)
            if (count < 0)
                throw RangeError("region '" + id + "': receptor count for '" + pop +
                                 "' must be >= 0");
        if (!(pain_intensity >= 0.0 && pain_intensity <= 1.0))
            throw RangeError("region '" + id + "': pain_intensity must lie in [0, 1]");
        if (!(secretion_per_intensity >= 0.0) || !std::isfinite(secretion_per_intensity))
            throw RangeError("region '" + id + "': secretion_per_intensity must be finite and >= 0");
        if (pixel_count < 1)
            throw RangeError("region '" + id + "': pixel_count must be >= 1");
    }
};

struct InjectionProtocol {
    // Total injected amount, split between agonist and antagonist by ratio_R
    // (agonist:antagonist), so agonist gets R/(1+R) and antagonist 1/(1+R).
    double total_dose = 0.0;
    double ratio_R = 1.0;
    HotLigand hot_ligand = HotLigand::agonist;
    DoseClass dose_class = DoseClass::threshold;
    double scan_start_minutes = 30.0;
    double scan_duration_minutes = 45.0;

    double agonist_dose() const { return total_dose * ratio_R / (1.0 + ratio_R); }
    double antagonist_dose() const { return total_dose / (1.0 + ratio_R); }

    void validate() const {
        if (!(total_dose > 0.0) || !std::isfinite(total_dose))
            throw InvalidDose("total_dose must be finite and > 0");
        if (!(ratio_R > 0.0) || !std::isfinite(ratio_R))
            throw RangeError("ratio_R must be finite and > 0");
        if (!(scan_start_minutes >= 0.0) || !std::isfinite(scan_start_minutes))
            throw InvalidWindow("scan_start_minutes must be finite and >= 0");
        if (!(scan_duration_minutes > 0.0) || !std::isfinite(scan_duration_minutes))
            throw InvalidWindow("scan_duration_minutes must be finite and > 0");
    }
};

struct PopulationBound {
    double agonist = 0.0;
    double antagonist = 0.0;
    double endogenous = 0.0;
    double occupancy_fraction = 0.0;

    double exogenous() const { return agonist + antagonist; }
};

struct BoundCounts {
    std::map<std::string, PopulationBound> populations;

    double total_agonist() const {
        double t = 0.0;
        for (const auto& [pop, b] : populations) t += b.agonist;
        return t;
    }
    double total_antagonist() const {
        double t = 0.0;
        for (const auto& [pop, b] : populations) t += b.antagonist;
        return t;
    }
    double total_exogenous() const { return total_agonist() + total_antagonist(); }
};

struct BindingOptions {
    // Maximum occupied fraction of any population before the linear regime
    // is declared broken.
    double saturation_cap = 0.10;
};

// Closed form for one population; sites may be fractional (between-subject
// jitter multiplies them by a lognormal factor). Does not enforce the cap.
inline PopulationBound population_equilibrium(double sites,
                                              double c_agonist,
                                              double c_antagonist,
                                              double c_endogenous,
                                              double k_agonist,
                                              double k_antagonist,
                                              double k_endogenous) {
    PopulationBound b;
    if (sites <= 0.0) return b;
    const double denom = 1.0 + c_endogenous * k_endogenous;
    b.agonist = sites * c_agonist * k_agonist / denom;
    b.antagonist = sites * c_antagonist * k_antagonist / denom;
    b.endogenous = sites * c_endogenous * k_endogenous / denom;
    b.occupancy_fraction = (b.agonist + b.antagonist + b.endogenous) / sites;
    return b;
}

// Expected bound amounts per receptor population of one region for a given
// injection, with endogenous competition from the region's current secretion
// level. Throws SaturationExceeded when any population's occupied fraction
// would exceed options.saturation_cap.
inline BoundCounts equilibrium_occupancy(const RegionSpec& region,
                                         const LigandSpec& agonist,
                                         const LigandSpec& antagonist,
                                         const LigandSpec& endogenous,
                                         const InjectionProtocol& protocol,
                                         const BindingOptions& options = {}) {
    protocol.validate();
    const double c_a = protocol.agonist_dose();
    const double c_aa = protocol.antagonist_dose();
    const double c_e = region.endogenous_concentration();

    BoundCounts out;
    for (const auto& [pop, sites_ll] : region.receptor_count) {
        PopulationBound b = population_equilibrium(static_cast<double>(sites_ll), c_a, c_aa, c_e,
                                                   agonist.affinity_for(pop),
                                                   antagonist.affinity_for(pop),
                                                   endogenous.affinity_for(pop));
        if (b.occupancy_fraction > options.saturation_cap)
            throw SaturationExceeded(
                "region '" + region.id + "', population '" + pop + "': occupied fraction " +
                std::to_string(b.occupancy_fraction) + " exceeds cap " +
                std::to_string(options.saturation_cap));
        out.populations.emplace(pop, b);
    }
    return out;
}

// Probability that one occupied site of the given population holds an
// agonist molecule rather than an antagonist, when both are co-injected at
// agonist:antagonist ratio R. Endogenous competition scales both bound pools
// equally, so it cancels here. Throws ZeroAffinity when neither injected
// ligand binds this population.
inline double agonist_attach_probability(const LigandSpec& agonist,
                                         const LigandSpec& antagonist,
                                         double ratio_R,
                                         const std::string& population) {
    if (!(ratio_R > 0.0) || !std::isfinite(ratio_R))
        throw RangeError("ratio_R must be finite and > 0");
    const double k_a = agonist.affinity_for(population);
    const double k_aa = antagonist.affinity_for(population);
    const double weight_a = ratio_R * k_a;
    const double weight_aa = k_aa;
    if (weight_a + weight_aa <= 0.0)
        throw ZeroAffinity("population '" + population +
                           "': neither injected ligand has positive affinity");
    return weight_a / (weight_a + weight_aa);
}

struct BalanceOptions {
    double ratio_min = 1e-6;
    double ratio_max = 1e6;
    int bisection_steps = 200;
};

// Mixing ratio R at which total bound agonist equals total bound antagonist
// summed over the given regions (dose magnitude cancels). The imbalance is
// strictly increasing in R, so bisection on log R suffices. Throws
// NoBalancePossible when the bracket does not straddle zero imbalance.
inline double choose_balancing_ratio(const LigandSpec& agonist,
                                     const LigandSpec& antagonist,
                                     const std::vector<RegionSpec>& regions,
                                     const LigandSpec& endogenous,
                                     const BalanceOptions& options = {}) {
    if (regions.empty()) throw RangeError("choose_balancing_ratio: no regions given");

    // Imbalance (bound agonist - bound antagonist) at unit dose and ratio R.
    auto imbalance = [&](double R) {
        double total = 0.0;
        for (const RegionSpec& region : regions) {
            const double c_e = region.endogenous_concentration();
            for (const auto& [pop, sites_ll] : region.receptor_count) {
                const double sites = static_cast<double>(sites_ll);
                const double k_e = endogenous.affinity_for(pop);
                const double denom = (1.0 + R) * (1.0 + c_e * k_e);
                total += sites *
                         (R * agonist.affinity_for(pop) - antagonist.affinity_for(pop)) / denom;
            }
        }
        return total;
    };

    double lo = options.ratio_min;
    double hi = options.ratio_max;
    double f_lo = imbalance(lo);
    double f_hi = imbalance(hi);
    if (f_lo == 0.0) return lo;
    if (f_hi == 0.0) return hi;
    if ((f_lo < 0.0) == (f_hi < 0.0))
        throw NoBalancePossible("no ratio in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                "] balances bound agonist against bound antagonist");
    double log_lo = std::log(lo);
    double log_hi = std::log(hi);
    for (int i = 0; i < options.bisection_steps; ++i) {
        const double log_mid = 0.5 * (log_lo + log_hi);
        const double f_mid = imbalance(std::exp(log_mid));
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            log_lo = log_mid;
            f_lo = f_mid;
        } else {
            log_hi = log_mid;
        }
    }
    return std::exp(0.5 * (log_lo + log_hi));
}

struct CalibrationOptions {
    BindingOptions binding;
    double relative_tolerance = 1e-6;
};

struct CalibrationResult {
    double threshold_dose = 0.0;
    // Largest dose admitted by the saturation cap across all regions and
    // populations (+inf when nothing binds anywhere).
    double dose_cap = 0.0;
    double analgesia_at_threshold = 0.0;
};

// Smallest total dose whose summed analgesic effect (bound exogenous agonist
// times its potency, over all regions) reaches `analgesia_threshold`, found
// by bisection. Throws ThresholdUnreachable when the saturation cap is hit
// first, and RangeError for a nonpositive threshold.
inline CalibrationResult calibrate_threshold_dose(const std::vector<RegionSpec>& regions,
                                                  const LigandSpec& agonist,
                                                  const LigandSpec& antagonist,
                                                  const LigandSpec& endogenous,
                                                  double ratio_R,
                                                  double analgesia_threshold,
                                                  const CalibrationOptions& options = {}) {
    if (!(analgesia_threshold > 0.0) || !std::isfinite(analgesia_threshold))
        throw RangeError("analgesia_threshold must be finite and > 0");
    if (!(ratio_R > 0.0) || !std::isfinite(ratio_R))
        throw RangeError("ratio_R must be finite and > 0");
    if (regions.empty()) throw RangeError("calibrate_threshold_dose: no regions given");

    const double cap = options.binding.saturation_cap;

    // Analytic cap on the dose: per population,
    //   occupied fraction = [D*(R*k_a + k_aa)/(1+R) + c_e*k_e] / (1 + c_e*k_e) <= cap.
    double dose_cap = std::numeric_limits<double>::infinity();
    for (const RegionSpec& region : regions) {
        const double c_e = region.endogenous_concentration();
        for (const auto& [pop, sites_ll] : region.receptor_count) {
            if (sites_ll <= 0) continue;
            const double k_e = endogenous.affinity_for(pop);
            const double exo_rate = (ratio_R * agonist.affinity_for(pop) +
                                     antagonist.affinity_for(pop)) /
                                    (1.0 + ratio_R);
            const double headroom = cap * (1.0 + c_e * k_e) - c_e * k_e;
            if (headroom < 0.0)
                throw ThresholdUnreachable("region '" + region.id + "', population '" + pop +
                                           "': endogenous occupancy alone exceeds the cap");
            if (exo_rate > 0.0) dose_cap = std::min(dose_cap, headroom / exo_rate);
        }
    }

    auto analgesia = [&](double dose) {
        if (dose <= 0.0) return 0.0;
        InjectionProtocol protocol;
        protocol.total_dose = dose;
        protocol.ratio_R = ratio_R;
        double total = 0.0;
        for (const RegionSpec& region : regions) {
            // Occupancy evaluated without the cap; the cap is enforced via
            // dose_cap above so probing never throws mid-bisection.
            const double c_a = protocol.agonist_dose();
            const double c_e = region.endogenous_concentration();
            for (const auto& [pop, sites_ll] : region.receptor_count) {
                const double denom = 1.0 + c_e * endogenous.affinity_for(pop);
                total += static_cast<double>(sites_ll) * c_a * agonist.affinity_for(pop) / denom;
            }
        }
        return total * agonist.analgesic_potency;
    };

    if (!std::isfinite(dose_cap))
        throw ThresholdUnreachable("no population binds the injected ligands; analgesia is flat");
    if (analgesia(dose_cap) < analgesia_threshold)
        throw ThresholdUnreachable("saturation cap reached at dose " + std::to_string(dose_cap) +
                                   " before analgesia " + std::to_string(analgesia_threshold));

    double lo = 0.0;
    double hi = dose_cap;
    while ((hi - lo) > options.relative_tolerance * hi) {
        const double mid = 0.5 * (lo + hi);
        if (analgesia(mid) >= analgesia_threshold)
            hi = mid;
        else
            lo = mid;
    }

    CalibrationResult result;
    result.threshold_dose = hi;
    result.dose_cap = dose_cap;
    result.analgesia_at_threshold = analgesia(hi);
    return result;
}

} // namespace opetsim
