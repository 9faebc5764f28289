#pragma once

// Emission counting and the four-scan measurement protocol.
//
// A scan reads out one region as Poisson counts per pixel. The expected
// per-pixel count is
//
//     bound_hot / pixel_count * counts_per_molecule_scale * efficiency
//         * decay_integral(start, duration, half_life)
//     + nonspecific_background + free_ligand_background
//
// where bound_hot is the number of bound molecules of whichever species
// carries the radioactive label in this scan. Backgrounds are additive,
// receptor-independent and identical for both labellings, which is what
// erodes the measured ratio contrast as they grow.
//
// Protocol. Four injections into the same subject, each followed by one
// scan of every region:
//
//     scan 0: threshold dose,        hot agonist     -> C_A
//     scan 1: threshold dose,        hot antagonist  -> C_AA
//     scan 2: subpharmacological,    hot agonist
//     scan 3: subpharmacological,    hot antagonist
//
// Each injection prepares a fresh occupancy mixture which collapses once
// per region per scan. The measured ratio r = C_A / C_AA is formed per
// region within each dose class; it is undefined when C_AA is zero.
//
// The autoradiography variant runs the same four scans on four distinct
// subjects: each scan draws its own subject, with receptor counts jittered
// by a mean-preserving lognormal factor exp(cv * z - cv^2 / 2).

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "opetsim/binding.hpp"
#include "opetsim/errors.hpp"
#include "opetsim/rng.hpp"
#include "opetsim/superposition.hpp"

namespace opetsim {

struct DetectorModel {
    // Fraction of emissions inside the window that are detected.
    double efficiency = 0.3;
    double isotope_half_life_minutes = 20.4;
    // Expected counts per pixel from tissue-bound label outside receptors.
    double nonspecific_background = 0.0;
    // Expected counts per pixel from circulating unbound hot ligand.
    double free_ligand_background = 0.0;
    // Emissions per bound molecule per minute at unit activity.
    double counts_per_molecule_scale = 1.0;

    void validate() const {
        if (!(efficiency > 0.0 && efficiency <= 1.0))
            throw RangeError("detector efficiency must lie in (0, 1]");
        if (!(isotope_half_life_minutes > 0.0))
            throw RangeError("isotope_half_life_minutes must be > 0");
        if (!(nonspecific_background >= 0.0) || !std::isfinite(nonspecific_background))
            throw RangeError("nonspecific_background must be finite and >= 0");
        if (!(free_ligand_background >= 0.0) || !std::isfinite(free_ligand_background))
            throw RangeError("free_ligand_background must be finite and >= 0");
        if (!(counts_per_molecule_scale > 0.0) || !std::isfinite(counts_per_molecule_scale))
            throw RangeError("counts_per_molecule_scale must be finite and > 0");
    }
};

// Integral of 2^(-t / half_life) over [start, start + duration], minutes.
// Written with expm1 so short windows and long half-lives stay accurate;
// an infinite half-life integrates to the bare duration.
inline double decay_integral(double start_minutes, double duration_minutes,
                             double half_life_minutes) {
    if (!(start_minutes >= 0.0) || !std::isfinite(start_minutes))
        throw InvalidWindow("window start must be finite and >= 0");
    if (!(duration_minutes > 0.0) || !std::isfinite(duration_minutes))
        throw InvalidWindow("window duration must be finite and > 0");
    if (!(half_life_minutes > 0.0)) throw RangeError("half-life must be > 0");
    if (std::isinf(half_life_minutes)) return duration_minutes;
    const double k = std::numbers::ln2 / half_life_minutes;
    return (1.0 / k) * std::exp(-k * start_minutes) * (-std::expm1(-k * duration_minutes));
}

struct RoiScan {
    std::vector<long long> pixels;
    // Mean of the pixel counts; the aggregate C entering the ratio.
    double counts_per_pixel = 0.0;
    // Poisson mean used for every pixel (diagnostic).
    double emission_mean = 0.0;
};

struct ScanResult {
    HotLigand hot_ligand = HotLigand::agonist;
    DoseClass dose_class = DoseClass::threshold;
    std::map<std::string, RoiScan> rois;
};

// Read out every region once. `occupancy` maps region id to the collapsed
// eigenstate produced by this scan's injection. Per-region pixel engines
// derive from the scan stream by region id, so the result is independent of
// map ordering.
inline ScanResult simulate_scan(const std::map<std::string, Eigenstate>& occupancy,
                                const std::vector<RegionSpec>& regions,
                                HotLigand hot_ligand,
                                const InjectionProtocol& protocol,
                                const DetectorModel& detector,
                                const RngStream& stream) {
    detector.validate();
    protocol.validate();
    const double window = decay_integral(protocol.scan_start_minutes,
                                         protocol.scan_duration_minutes,
                                         detector.isotope_half_life_minutes);
    ScanResult result;
    result.hot_ligand = hot_ligand;
    result.dose_class = protocol.dose_class;
    for (const RegionSpec& region : regions) {
        auto found = occupancy.find(region.id);
        if (found == occupancy.end())
            throw RangeError("simulate_scan: no occupancy state for region '" + region.id + "'");
        const Eigenstate& state = found->second;
        const long long bound_hot =
            hot_ligand == HotLigand::agonist ? state.agonist : state.antagonist;

        RoiScan roi;
        roi.emission_mean = static_cast<double>(bound_hot) /
                                static_cast<double>(region.pixel_count) *
                                detector.counts_per_molecule_scale * detector.efficiency * window +
                            detector.nonspecific_background + detector.free_ligand_background;
        roi.pixels.assign(static_cast<std::size_t>(region.pixel_count), 0);
        long long total = 0;
        if (roi.emission_mean > 0.0) {
            std::mt19937_64 engine = stream.derived(region.id).engine();
            std::poisson_distribution<long long> poisson(roi.emission_mean);
            for (auto& px : roi.pixels) {
                px = poisson(engine);
                total += px;
            }
        }
        roi.counts_per_pixel = static_cast<double>(total) / static_cast<double>(region.pixel_count);
        result.rois.emplace(region.id, roi);
    }
    return result;
}

struct RatioValue {
    double value = 0.0;
    bool defined = false;
};

// Per-region r = C_A / C_AA from one hot-agonist and one hot-antagonist scan
// of the same dose class. Undefined (not a number substitute, an explicit
// flag) when the hot-antagonist aggregate is zero.
inline std::map<std::string, RatioValue> compute_ratio(const ScanResult& hot_agonist_scan,
                                                       const ScanResult& hot_antagonist_scan) {
    if (hot_agonist_scan.hot_ligand != HotLigand::agonist ||
        hot_antagonist_scan.hot_ligand != HotLigand::antagonist)
        throw RangeError("compute_ratio: scans must be hot-agonist then hot-antagonist");
    if (hot_agonist_scan.dose_class != hot_antagonist_scan.dose_class)
        throw RangeError("compute_ratio: scans belong to different dose classes");
    if (hot_agonist_scan.rois.size() != hot_antagonist_scan.rois.size())
        throw RangeError("compute_ratio: scans cover different region sets");
    std::map<std::string, RatioValue> out;
    for (const auto& [id, roi_a] : hot_agonist_scan.rois) {
        auto it = hot_antagonist_scan.rois.find(id);
        if (it == hot_antagonist_scan.rois.end())
            throw RangeError("compute_ratio: region '" + id + "' missing from one scan");
        RatioValue r;
        if (it->second.counts_per_pixel > 0.0) {
            r.value = roi_a.counts_per_pixel / it->second.counts_per_pixel;
            r.defined = true;
        }
        out.emplace(id, r);
    }
    return out;
}

struct RoiObservation {
    double counts_hot_agonist = 0.0;
    double counts_hot_antagonist = 0.0;
    RatioValue ratio;

    double total_counts() const { return counts_hot_agonist + counts_hot_antagonist; }
};

struct RoiOutcome {
    bool pain_responsive = false;
    RoiObservation threshold;
    RoiObservation subpharmacological;
};

struct ExperimentResult {
    std::uint64_t replicate = 0;
    std::map<std::string, RoiOutcome> rois;
};

enum class ProtocolKind { pet, autoradiography };

struct SubjectConfig {
    std::vector<RegionSpec> regions;
    LigandSpec agonist;
    LigandSpec antagonist;
    LigandSpec endogenous;

    void validate() const {
        if (regions.empty()) throw RangeError("subject needs at least one region");
        for (const RegionSpec& region : regions) region.validate();
        for (std::size_t i = 0; i < regions.size(); ++i)
            for (std::size_t j = i + 1; j < regions.size(); ++j)
                if (regions[i].id == regions[j].id)
                    throw RangeError("duplicate region id '" + regions[i].id + "'");
        agonist.validate(true);
        antagonist.validate(true);
        endogenous.validate(false);
        if (agonist.role != LigandRole::agonist)
            throw RangeError("ligand '" + agonist.name + "' must have the agonist role");
        if (antagonist.role != LigandRole::antagonist)
            throw RangeError("ligand '" + antagonist.name + "' must have the antagonist role");
        if (endogenous.role != LigandRole::agonist)
            throw RangeError("endogenous ligand '" + endogenous.name + "' must be an agonist");
    }
};

struct ProtocolSettings {
    ProtocolKind kind = ProtocolKind::pet;
    // Unset: balance bound agonist against bound antagonist automatically.
    std::optional<double> ratio_R;
    // Unset: calibrate to analgesia_threshold.
    std::optional<double> threshold_dose;
    double analgesia_threshold = 1.0;
    double subpharmacological_fraction = 0.1;
    double scan_start_minutes = 30.0;
    double scan_duration_minutes = 45.0;
    double saturation_cap = 0.10;
    // Lognormal receptor-count jitter between subjects (autoradiography).
    double between_subject_cv = 0.0;

    void validate() const {
        if (ratio_R && (!(*ratio_R > 0.0) || !std::isfinite(*ratio_R)))
            throw RangeError("ratio_R must be finite and > 0");
        if (threshold_dose && (!(*threshold_dose > 0.0) || !std::isfinite(*threshold_dose)))
            throw InvalidDose("threshold_dose must be finite and > 0");
        if (!(analgesia_threshold > 0.0) || !std::isfinite(analgesia_threshold))
            throw RangeError("analgesia_threshold must be finite and > 0");
        if (!(subpharmacological_fraction > 0.0 && subpharmacological_fraction < 1.0))
            throw RangeError("subpharmacological_fraction must lie in (0, 1)");
        if (!(scan_start_minutes >= 0.0) || !std::isfinite(scan_start_minutes))
            throw InvalidWindow("scan_start_minutes must be finite and >= 0");
        if (!(scan_duration_minutes > 0.0) || !std::isfinite(scan_duration_minutes))
            throw InvalidWindow("scan_duration_minutes must be finite and > 0");
        if (!(saturation_cap > 0.0 && saturation_cap <= 1.0))
            throw RangeError("saturation_cap must lie in (0, 1]");
        if (!(between_subject_cv >= 0.0) || !std::isfinite(between_subject_cv))
            throw RangeError("between_subject_cv must be finite and >= 0");
        if (kind == ProtocolKind::pet && between_subject_cv != 0.0)
            throw RangeError("between_subject_cv applies to autoradiography only");
    }
};

// Prepares a fully resolved protocol (balanced ratio, calibrated doses,
// per-region attach probabilities) and runs replicates of the four-scan
// experiment. All randomness derives from the master stream as
//
//     master -> [replicate] -> [channel] -> [scan index] -> [region id] (-> [population id])
//
// with channel::collapse for eigenstate draws, channel::pixels for detector
// noise and channel::jitter for autoradiography subjects.
class ProtocolRunner {
public:
    ProtocolRunner(SubjectConfig subject, ProtocolSettings settings, BiasModel bias,
                   DetectorModel detector)
        : subject_(std::move(subject)), settings_(std::move(settings)), bias_(bias),
          detector_(detector) {
        subject_.validate();
        settings_.validate();
        bias_.validate();
        detector_.validate();

        binding_.saturation_cap = settings_.saturation_cap;
        ratio_ = settings_.ratio_R
                     ? *settings_.ratio_R
                     : choose_balancing_ratio(subject_.agonist, subject_.antagonist,
                                              subject_.regions, subject_.endogenous);
        if (settings_.threshold_dose) {
            threshold_dose_ = *settings_.threshold_dose;
        } else {
            CalibrationOptions opts;
            opts.binding = binding_;
            calibration_ = calibrate_threshold_dose(subject_.regions, subject_.agonist,
                                                    subject_.antagonist, subject_.endogenous,
                                                    ratio_, settings_.analgesia_threshold, opts);
            threshold_dose_ = calibration_->threshold_dose;
        }
        subpharm_dose_ = threshold_dose_ * settings_.subpharmacological_fraction;

        // Enforce the cap once up front for both dose classes (worst case is
        // the threshold dose; the subpharmacological dose only lowers it).
        for (const RegionSpec& region : subject_.regions) {
            equilibrium_occupancy(region, subject_.agonist, subject_.antagonist,
                                  subject_.endogenous, protocol(DoseClass::threshold,
                                                               HotLigand::agonist),
                                  binding_);
        }

        if (settings_.kind == ProtocolKind::pet) prepare_pet_distributions();
    }

    double ratio() const { return ratio_; }
    double threshold_dose() const { return threshold_dose_; }
    double subpharmacological_dose() const { return subpharm_dose_; }
    const std::optional<CalibrationResult>& calibration() const { return calibration_; }
    const SubjectConfig& subject() const { return subject_; }
    const ProtocolSettings& settings() const { return settings_; }

    InjectionProtocol protocol(DoseClass dose_class, HotLigand hot) const {
        InjectionProtocol p;
        p.total_dose =
            dose_class == DoseClass::threshold ? threshold_dose_ : subpharm_dose_;
        p.ratio_R = ratio_;
        p.hot_ligand = hot;
        p.dose_class = dose_class;
        p.scan_start_minutes = settings_.scan_start_minutes;
        p.scan_duration_minutes = settings_.scan_duration_minutes;
        return p;
    }

    // Post-bias occupancy mixtures for one injection, keyed by region id
    // then population id. PET reuses the cached mixtures; autoradiography
    // rebuilds them for the scan's jittered subject.
    std::map<std::string, std::map<std::string, OccupancyDistribution>>
    injection_state(DoseClass dose_class, const RngStream& jitter_stream) const {
        if (settings_.kind == ProtocolKind::pet)
            return dose_class == DoseClass::threshold ? pet_threshold_ : pet_subpharm_;

        std::map<std::string, std::map<std::string, OccupancyDistribution>> state;
        InjectionProtocol inj = protocol(dose_class, HotLigand::agonist);
        const double c_a = inj.agonist_dose();
        const double c_aa = inj.antagonist_dose();
        for (const RegionSpec& region : subject_.regions) {
            RngStream region_stream = jitter_stream.derived(region.id);
            const double c_e = region.endogenous_concentration();
            GateInputs gate{dose_class, region.pain_responsive, region.pain_intensity};
            for (const auto& [pop, sites_ll] : region.receptor_count) {
                std::mt19937_64 engine = region_stream.derived(pop).engine();
                std::normal_distribution<double> normal(0.0, 1.0);
                const double cv = settings_.between_subject_cv;
                const double factor = std::exp(cv * normal(engine) - 0.5 * cv * cv);
                const double sites = static_cast<double>(sites_ll) * factor;
                state[region.id].emplace(
                    pop, population_mixture(region, pop, sites, c_a, c_aa, c_e, gate));
            }
        }
        return state;
    }

    // One full four-scan experiment. Distinct replicate indices give
    // independent streams under the same master.
    ExperimentResult run_replicate(const RngStream& master, std::uint64_t replicate) const {
        RngStream rep = master.derived(replicate);
        ExperimentResult result;
        result.replicate = replicate;
        for (const RegionSpec& region : subject_.regions) {
            RoiOutcome outcome;
            outcome.pain_responsive = region.pain_responsive;
            result.rois.emplace(region.id, outcome);
        }

        for (int scan_index = 0; scan_index < 4; ++scan_index) {
            const DoseClass dose_class =
                scan_index < 2 ? DoseClass::threshold : DoseClass::subpharmacological;
            const HotLigand hot =
                scan_index % 2 == 0 ? HotLigand::agonist : HotLigand::antagonist;

            std::map<std::string, std::map<std::string, OccupancyDistribution>> jittered;
            const auto* mixtures_ptr =
                dose_class == DoseClass::threshold ? &pet_threshold_ : &pet_subpharm_;
            if (settings_.kind == ProtocolKind::autoradiography) {
                jittered = injection_state(
                    dose_class, rep.derived(channel::jitter).derived(
                                    static_cast<std::uint64_t>(scan_index)));
                mixtures_ptr = &jittered;
            }
            const auto& mixtures = *mixtures_ptr;

            // Fresh collapse for this injection: one eigenstate per region
            // (per population, summed) that both this scan's pixels see.
            RngStream collapse_stream =
                rep.derived(channel::collapse).derived(static_cast<std::uint64_t>(scan_index));
            std::map<std::string, Eigenstate> occupancy;
            for (const auto& [region_id, pops] : mixtures) {
                Eigenstate total;
                RngStream region_stream = collapse_stream.derived(region_id);
                for (const auto& [pop, dist] : pops) {
                    std::mt19937_64 engine = region_stream.derived(pop).engine();
                    Eigenstate e = collapse(dist, engine);
                    total.agonist += e.agonist;
                    total.antagonist += e.antagonist;
                }
                occupancy.emplace(region_id, total);
            }

            RngStream pixel_stream =
                rep.derived(channel::pixels).derived(static_cast<std::uint64_t>(scan_index));
            ScanResult scan = simulate_scan(occupancy, subject_.regions, hot,
                                            protocol(dose_class, hot), detector_, pixel_stream);

            for (const auto& [region_id, roi] : scan.rois) {
                RoiObservation& obs = dose_class == DoseClass::threshold
                                          ? result.rois[region_id].threshold
                                          : result.rois[region_id].subpharmacological;
                if (hot == HotLigand::agonist)
                    obs.counts_hot_agonist = roi.counts_per_pixel;
                else
                    obs.counts_hot_antagonist = roi.counts_per_pixel;
            }
        }

        for (auto& [region_id, outcome] : result.rois) {
            for (RoiObservation* obs :
                 {&outcome.threshold, &outcome.subpharmacological}) {
                if (obs->counts_hot_antagonist > 0.0) {
                    obs->ratio.value = obs->counts_hot_agonist / obs->counts_hot_antagonist;
                    obs->ratio.defined = true;
                }
            }
        }
        return result;
    }

private:
    OccupancyDistribution population_mixture(const RegionSpec& region, const std::string& pop,
                                             double sites, double c_a, double c_aa, double c_e,
                                             const GateInputs& gate) const {
        PopulationBound b = population_equilibrium(
            sites, c_a, c_aa, c_e, subject_.agonist.affinity_for(pop),
            subject_.antagonist.affinity_for(pop), subject_.endogenous.affinity_for(pop));
        if (b.occupancy_fraction > settings_.saturation_cap)
            throw SaturationExceeded("region '" + region.id + "', population '" + pop +
                                     "': occupied fraction exceeds cap during protocol");
        const long long N = std::llround(b.agonist + b.antagonist);
        if (N <= 0) return point_mass(0, 0);
        const double p =
            agonist_attach_probability(subject_.agonist, subject_.antagonist, ratio_, pop);
        return apply_bias(baseline_distribution(N, p), bias_, gate);
    }

    void prepare_pet_distributions() {
        for (DoseClass dose_class :
             {DoseClass::threshold, DoseClass::subpharmacological}) {
            InjectionProtocol inj = protocol(dose_class, HotLigand::agonist);
            const double c_a = inj.agonist_dose();
            const double c_aa = inj.antagonist_dose();
            auto& cache =
                dose_class == DoseClass::threshold ? pet_threshold_ : pet_subpharm_;
            for (const RegionSpec& region : subject_.regions) {
                GateInputs gate{dose_class, region.pain_responsive, region.pain_intensity};
                const double c_e = region.endogenous_concentration();
                for (const auto& [pop, sites_ll] : region.receptor_count) {
                    cache[region.id].emplace(
                        pop, population_mixture(region, pop, static_cast<double>(sites_ll), c_a,
                                                c_aa, c_e, gate));
                }
            }
        }
    }

    SubjectConfig subject_;
    ProtocolSettings settings_;
    BiasModel bias_;
    DetectorModel detector_;
    BindingOptions binding_;
    double ratio_ = 1.0;
    double threshold_dose_ = 0.0;
    double subpharm_dose_ = 0.0;
    std::optional<CalibrationResult> calibration_;
    std::map<std::string, std::map<std::string, OccupancyDistribution>> pet_threshold_;
    std::map<std::string, std::map<std::string, OccupancyDistribution>> pet_subpharm_;
};

// Single-replicate conveniences around ProtocolRunner.
inline ExperimentResult run_four_scan_protocol(const SubjectConfig& subject,
                                               const ProtocolSettings& settings,
                                               const BiasModel& bias,
                                               const DetectorModel& detector,
                                               const RngStream& master,
                                               std::uint64_t replicate = 0) {
    ProtocolSettings s = settings;
    s.kind = ProtocolKind::pet;
    s.between_subject_cv = 0.0;
    return ProtocolRunner(subject, s, bias, detector).run_replicate(master, replicate);
}

inline ExperimentResult run_autoradiography_protocol(const SubjectConfig& subject,
                                                     const ProtocolSettings& settings,
                                                     const BiasModel& bias,
                                                     const DetectorModel& detector,
                                                     const RngStream& master,
                                                     std::uint64_t replicate = 0) {
    ProtocolSettings s = settings;
    s.kind = ProtocolKind::autoradiography;
    return ProtocolRunner(subject, s, bias, detector).run_replicate(master, replicate);
}

} // namespace opetsim
