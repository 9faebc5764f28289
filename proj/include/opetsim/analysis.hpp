#pragma once

// Statistical evaluation of simulated experiments.
//
// The scientific claim under test, per region: at the threshold dose the
// measured ratio r = C_A / C_AA exceeds its subpharmacological counterpart
// in pain-responsive regions (one-sided), and differs in neither direction
// elsewhere (two-sided). Replicates are paired within a subject, so the
// test is an exact paired sign test on r_threshold - r_subpharmacological:
//
//   * pairs where either ratio is undefined are excluded (and counted),
//   * zero differences are dropped as ties (and counted),
//   * the p-value is the binomial tail P(X >= positives) under X ~
//     Binomial(n_used, 1/2), exact up to n_used = 50 and a continuity-
//     corrected normal tail beyond.
//
// Power is estimated by rerunning whole experiments on a grid over the bias
// strength lambda, an experiment-size axis and the detector background, and
// counting how often the pain-region test rejects.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "opetsim/errors.hpp"
#include "opetsim/rng.hpp"
#include "opetsim/scanner.hpp"
#include "opetsim/superposition.hpp"

namespace opetsim {

// Largest n for which the binomial tail is summed exactly; C(n, n/2) still
// fits a double's integer range there. Larger n uses the normal tail with
// continuity correction.
inline constexpr long long kExactSignTestLimit = 50;

// P(X >= k) for X ~ Binomial(n, 1/2), exact summation.
inline double binomial_half_tail_exact(long long n, long long k) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    double coeff = 1.0; // C(n, 0)
    double tail = 0.0;
    for (long long i = 0; i <= n; ++i) {
        if (i >= k) tail += coeff;
        coeff = coeff * static_cast<double>(n - i) / static_cast<double>(i + 1);
    }
    return tail * std::pow(0.5, static_cast<double>(n));
}

// Upper tail of the standard normal.
inline double normal_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

// P(X >= k) for X ~ Binomial(n, 1/2), continuity-corrected normal tail.
inline double binomial_half_tail_approx(long long n, long long k) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    const double mean = 0.5 * static_cast<double>(n);
    const double sd = 0.5 * std::sqrt(static_cast<double>(n));
    return normal_tail((static_cast<double>(k) - 0.5 - mean) / sd);
}

inline double binomial_half_tail(long long n, long long k) {
    return n <= kExactSignTestLimit ? binomial_half_tail_exact(n, k)
                                    : binomial_half_tail_approx(n, k);
}

// Sign-test p-value from n_used informative pairs with `positives` of them
// positive. One-sided tests the "greater" direction. n_used = 0 gives 1.
inline double sign_test_p_value(long long n_used, long long positives, bool one_sided) {
    if (n_used < 0 || positives < 0 || positives > n_used)
        throw RangeError("sign test: positives must lie in [0, n_used]");
    if (n_used == 0) return 1.0;
    if (one_sided) return binomial_half_tail(n_used, positives);
    const long long k_extreme = std::max(positives, n_used - positives);
    return std::min(1.0, 2.0 * binomial_half_tail(n_used, k_extreme));
}

struct RoiHypothesis {
    std::string roi;
    bool pain_responsive = false;
    bool one_sided = false;
    long long n_pairs = 0;
    long long n_excluded = 0;
    long long n_ties = 0;
    long long n_used = 0;
    long long positives = 0;
    // Median of r_threshold - r_subpharmacological over non-excluded pairs.
    double median_difference = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

struct HypothesisReport {
    double alpha = 0.05;
    bool bonferroni_applied = false;
    double alpha_per_test = 0.05;
    long long replicates = 0;
    long long excluded_pairs_total = 0;
    std::vector<RoiHypothesis> rois;

    const RoiHypothesis& roi(const std::string& id) const {
        for (const RoiHypothesis& h : rois)
            if (h.roi == id) return h;
        throw RangeError("no hypothesis entry for region '" + id + "'");
    }
};

inline double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Paired comparison of threshold vs subpharmacological ratios per region.
// One-sided (greater) in pain-responsive regions, two-sided elsewhere.
// Throws InsufficientData for fewer than two replicates and AllExcluded when
// no (replicate, region) pair anywhere has both ratios defined. Results are
// invariant to the ordering of replicates and regions.
inline HypothesisReport test_hypothesis(const std::vector<ExperimentResult>& results,
                                        double alpha, bool bonferroni = false) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("alpha must lie in (0, 1)");
    if (results.size() < 2)
        throw InsufficientData("paired test needs at least 2 replicates, got " +
                               std::to_string(results.size()));
    const auto& reference = results.front().rois;
    for (const ExperimentResult& r : results) {
        if (r.rois.size() != reference.size())
            throw RangeError("replicates cover different region sets");
        for (const auto& [id, outcome] : reference)
            if (r.rois.find(id) == r.rois.end())
                throw RangeError("region '" + id + "' missing from a replicate");
    }

    HypothesisReport report;
    report.alpha = alpha;
    report.bonferroni_applied = bonferroni;
    report.alpha_per_test =
        bonferroni ? alpha / static_cast<double>(reference.size()) : alpha;
    report.replicates = static_cast<long long>(results.size());

    for (const auto& [id, ref_outcome] : reference) {
        RoiHypothesis h;
        h.roi = id;
        h.pain_responsive = ref_outcome.pain_responsive;
        h.one_sided = h.pain_responsive;
        std::vector<double> differences;
        for (const ExperimentResult& r : results) {
            const RoiOutcome& outcome = r.rois.at(id);
            ++h.n_pairs;
            if (!outcome.threshold.ratio.defined || !outcome.subpharmacological.ratio.defined) {
                ++h.n_excluded;
                continue;
            }
            differences.push_back(outcome.threshold.ratio.value -
                                  outcome.subpharmacological.ratio.value);
        }
        for (double d : differences) {
            if (d == 0.0)
                ++h.n_ties;
            else {
                ++h.n_used;
                if (d > 0.0) ++h.positives;
            }
        }
        h.median_difference = median_of(differences);
        h.p_value = sign_test_p_value(h.n_used, h.positives, h.one_sided);
        h.reject = h.p_value <= report.alpha_per_test;
        report.excluded_pairs_total += h.n_excluded;
        report.rois.push_back(std::move(h));
    }

    long long total_pairs = 0;
    for (const RoiHypothesis& h : report.rois) total_pairs += h.n_pairs;
    if (report.excluded_pairs_total == total_pairs)
        throw AllExcluded("every replicate/region pair has an undefined ratio");
    return report;
}

struct EffectSize {
    // Shift of the mean ratio eigenvalue (conditional on the ratio being
    // defined, i.e. excluding the all-agonist eigenstate).
    double delta_mean_ratio = 0.0;
    double baseline_mean_ratio = 0.0;
    double biased_mean_ratio = 0.0;
    // Probability mass on the undefined (all-agonist) eigenstate.
    double baseline_undefined_mass = 0.0;
    double biased_undefined_mass = 0.0;
    // Attach probability after the tilt.
    double biased_attach_probability = 0.0;
};

// Analytic effect of a bias of strength lambda on Binomial(N, p): the tilt
// maps p to p * e^lambda / (p * e^lambda + 1 - p), which stays binomial.
inline EffectSize effect_size(long long N, double p, double lambda) {
    if (N < 1) throw RangeError("effect_size needs at least one site");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidProbability("attach probability outside [0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw RangeError("bias lambda must be finite and >= 0");

    const double e = std::exp(lambda);
    const double p_tilted = p * e / (p * e + (1.0 - p));

    auto summarize = [N](const OccupancyDistribution& dist, double& mean_ratio,
                         double& undefined_mass) {
        undefined_mass = dist.weights.back();
        const double defined_mass = 1.0 - undefined_mass;
        double acc = 0.0;
        for (long long c = 0; c < N; ++c)
            acc += dist.weights[static_cast<std::size_t>(c)] * dist.ratio_eigenvalue(c);
        mean_ratio = defined_mass > 0.0 ? acc / defined_mass
                                        : std::numeric_limits<double>::infinity();
    };

    EffectSize es;
    es.biased_attach_probability = p_tilted;
    summarize(baseline_distribution(N, p), es.baseline_mean_ratio, es.baseline_undefined_mass);
    summarize(baseline_distribution(N, p_tilted), es.biased_mean_ratio, es.biased_undefined_mass);
    es.delta_mean_ratio = es.biased_mean_ratio - es.baseline_mean_ratio;
    return es;
}

enum class SizeAxis { replicates, pixels };

struct PowerGrids {
    std::vector<double> lambda_grid;
    std::vector<long long> size_grid;
    std::vector<double> background_grid;
    SizeAxis size_axis = SizeAxis::replicates;

    void validate() const {
        if (lambda_grid.empty() || size_grid.empty() || background_grid.empty())
            throw RangeError("power grids must be nonempty");
        for (double l : lambda_grid)
            if (!(l >= 0.0) || !std::isfinite(l))
                throw RangeError("lambda grid values must be finite and >= 0");
        for (long long s : size_grid)
            if (s < 2) throw RangeError("size grid values must be >= 2");
        for (double b : background_grid)
            if (!(b >= 0.0) || !std::isfinite(b))
                throw RangeError("background grid values must be finite and >= 0");
    }
};

struct PowerPoint {
    double lambda = 0.0;
    long long size = 0;
    double background = 0.0;
    long long trials = 0;
    // Rejections and tests pool over pain-responsive regions within each
    // trial, so `power` estimates the per-region rejection probability.
    long long tests = 0;
    long long rejections = 0;
    double power = 0.0;
    double std_error = 0.0;
    bool failed = false;
    std::string message;
};

struct PowerSurface {
    double alpha = 0.05;
    long long replications = 0;
    std::vector<PowerPoint> cells;
};

// Monte Carlo power over the cartesian grid, row-major in
// (lambda, size, background). The size axis either sets the number of
// replicate subjects per simulated experiment or overrides every region's
// pixel count (keeping base_replicates subjects). Every cell derives its
// randomness as master -> [channel::power] -> [cell index] -> [trial], so
// identical inputs give identical surfaces and cells are independent.
// A cell whose simulation or test raises keeps its failure message and the
// sweep continues. Requires replications >= 100 for a usable standard error.
inline PowerSurface power_curve(const SubjectConfig& subject, const ProtocolSettings& settings,
                                const DetectorModel& detector, const PowerGrids& grids,
                                double alpha, bool bonferroni, long long replications,
                                long long base_replicates, const RngStream& master) {
    grids.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("alpha must lie in (0, 1)");
    if (replications < 100)
        throw RangeError("power needs >= 100 replications per cell, got " +
                         std::to_string(replications));
    if (grids.size_axis == SizeAxis::pixels && base_replicates < 2)
        throw RangeError("pixel-axis power needs >= 2 replicates per experiment");

    PowerSurface surface;
    surface.alpha = alpha;
    surface.replications = replications;
    std::uint64_t cell_index = 0;
    for (double lambda : grids.lambda_grid) {
        for (long long size : grids.size_grid) {
            for (double background : grids.background_grid) {
                PowerPoint cell;
                cell.lambda = lambda;
                cell.size = size;
                cell.background = background;
                try {
                    SubjectConfig subj = subject;
                    if (grids.size_axis == SizeAxis::pixels)
                        for (RegionSpec& region : subj.regions) region.pixel_count = size;
                    DetectorModel det = detector;
                    det.nonspecific_background = background;
                    BiasModel bias;
                    bias.lambda = lambda;
                    const long long n_rep =
                        grids.size_axis == SizeAxis::replicates ? size : base_replicates;
                    ProtocolRunner runner(subj, settings, bias, det);
                    for (long long trial = 0; trial < replications; ++trial) {
                        RngStream trial_stream = master.derived(channel::power)
                                                     .derived(cell_index)
                                                     .derived(static_cast<std::uint64_t>(trial));
                        std::vector<ExperimentResult> results;
                        results.reserve(static_cast<std::size_t>(n_rep));
                        for (long long r = 0; r < n_rep; ++r)
                            results.push_back(runner.run_replicate(
                                trial_stream, static_cast<std::uint64_t>(r)));
                        HypothesisReport report = test_hypothesis(results, alpha, bonferroni);
                        ++cell.trials;
                        for (const RoiHypothesis& h : report.rois) {
                            if (!h.pain_responsive) continue;
                            ++cell.tests;
                            if (h.reject) ++cell.rejections;
                        }
                    }
                    if (cell.tests == 0)
                        throw RangeError("no pain-responsive region to estimate power on");
                    cell.power =
                        static_cast<double>(cell.rejections) / static_cast<double>(cell.tests);
                    cell.std_error = std::sqrt(cell.power * (1.0 - cell.power) /
                                               static_cast<double>(cell.tests));
                } catch (const SimulationError& err) {
                    cell.failed = true;
                    cell.message = err.what();
                }
                surface.cells.push_back(std::move(cell));
                ++cell_index;
            }
        }
    }
    return surface;
}

} // namespace opetsim
