#pragma once

// Occupancy state of a region as a weighted mixture over eigenstates.
//
// With N occupied sites per region and attach probability p per site, the
// number of bound agonist molecules c is Binomial(N, p); the antagonist
// count is N - c. Each eigenstate carries the ratio eigenvalue
//
//     r(c) = c / (N - c)        (undefined at c = N)
//
// The pain-gated bias reweights the mixture toward agonist-rich eigenstates
// without breaking normalization: weights are multiplied by exp(lambda * c)
// and renormalized. For a binomial baseline this is again binomial with
//
//     p' = p * e^lambda / (p * e^lambda + 1 - p),
//
// which makes the tilt composable (lambda1 then lambda2 equals
// lambda1 + lambda2) and strictly increasing in distribution for lambda > 0.
// The gate opens only for a threshold-class injection into a pain-responsive
// region at nonzero pain intensity; a closed gate or lambda = 0 returns the
// input weights bit for bit.
//
// A measurement (scan) collapses each region's mixture to one eigenstate by
// CDF inversion of a single uniform draw.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "opetsim/binding.hpp"
#include "opetsim/errors.hpp"
#include "opetsim/rng.hpp"

namespace opetsim {

struct OccupancyDistribution {
    // weights[c] = probability of the eigenstate with c bound agonists.
    std::vector<double> weights;

    long long sites() const { return static_cast<long long>(weights.size()) - 1; }

    bool ratio_defined(long long c) const { return c < sites(); }

    double ratio_eigenvalue(long long c) const {
        return static_cast<double>(c) / static_cast<double>(sites() - c);
    }

    double expected_agonist() const {
        double mean = 0.0;
        for (std::size_t c = 0; c < weights.size(); ++c)
            mean += static_cast<double>(c) * weights[c];
        return mean;
    }

    // P(c <= k); used by dominance checks.
    double cdf(long long k) const {
        double acc = 0.0;
        for (long long c = 0; c <= k && c <= sites(); ++c)
            acc += weights[static_cast<std::size_t>(c)];
        return acc;
    }

    void validate(double tolerance = 1e-12) const {
        if (weights.empty()) throw RangeError("occupancy distribution has no states");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w))
                throw InvalidProbability("occupancy weight must be finite and >= 0");
            total += w;
        }
        if (std::abs(total - 1.0) > tolerance)
            throw InvalidProbability("occupancy weights sum to " + std::to_string(total));
    }
};

// Binomial(N, p) over bound-agonist count, computed in log space so large N
// stays finite. N = 0 yields the single empty eigenstate.
inline OccupancyDistribution baseline_distribution(long long N, double p) {
    if (N < 0) throw RangeError("site count must be >= 0");
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidProbability("attach probability " + std::to_string(p) + " outside [0, 1]");

    OccupancyDistribution dist;
    dist.weights.assign(static_cast<std::size_t>(N) + 1, 0.0);
    if (p == 0.0) {
        dist.weights.front() = 1.0;
        return dist;
    }
    if (p == 1.0) {
        dist.weights.back() = 1.0;
        return dist;
    }
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    const double log_n_fact = std::lgamma(static_cast<double>(N) + 1.0);
    double total = 0.0;
    for (long long c = 0; c <= N; ++c) {
        const double log_w = log_n_fact - std::lgamma(static_cast<double>(c) + 1.0) -
                             std::lgamma(static_cast<double>(N - c) + 1.0) +
                             static_cast<double>(c) * log_p + static_cast<double>(N - c) * log_q;
        const double w = std::exp(log_w);
        dist.weights[static_cast<std::size_t>(c)] = w;
        total += w;
    }
    for (double& w : dist.weights) w /= total;
    return dist;
}

inline OccupancyDistribution point_mass(long long N, long long c) {
    if (N < 0 || c < 0 || c > N) throw RangeError("point mass state outside 0..N");
    OccupancyDistribution dist;
    dist.weights.assign(static_cast<std::size_t>(N) + 1, 0.0);
    dist.weights[static_cast<std::size_t>(c)] = 1.0;
    return dist;
}

struct GateInputs {
    DoseClass dose_class = DoseClass::subpharmacological;
    bool pain_responsive = false;
    double pain_intensity = 0.0;
};

struct BiasModel {
    // Log weight enhancement per bound agonist molecule.
    double lambda = 0.0;

    bool gate_active(const GateInputs& gate) const {
        return gate.dose_class == DoseClass::threshold && gate.pain_responsive &&
               gate.pain_intensity > 0.0;
    }

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw RangeError("bias lambda must be finite and >= 0");
    }
};

// Reweighted mixture. Inactive gate or lambda = 0 returns the input
// unchanged (bitwise). Active: w'_c proportional to w_c * exp(lambda * c),
// renormalized in log space; zero weights stay exactly zero.
inline OccupancyDistribution apply_bias(const OccupancyDistribution& dist,
                                        const BiasModel& bias,
                                        const GateInputs& gate) {
    bias.validate();
    if (!bias.gate_active(gate) || bias.lambda == 0.0) return dist;

    const std::size_t n_states = dist.weights.size();
    std::vector<double> log_w(n_states, -std::numeric_limits<double>::infinity());
    double log_max = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n_states; ++c) {
        if (dist.weights[c] > 0.0) {
            log_w[c] = std::log(dist.weights[c]) + bias.lambda * static_cast<double>(c);
            log_max = std::max(log_max, log_w[c]);
        }
    }
    if (!std::isfinite(log_max))
        throw InvalidProbability("cannot bias a distribution with no positive weight");

    OccupancyDistribution out;
    out.weights.assign(n_states, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < n_states; ++c) {
        if (dist.weights[c] > 0.0) {
            out.weights[c] = std::exp(log_w[c] - log_max);
            total += out.weights[c];
        }
    }
    for (double& w : out.weights) w /= total;
    return out;
}

struct Eigenstate {
    long long agonist = 0;
    long long antagonist = 0;
};

// One measurement outcome: inversion of the weight CDF at a single uniform
// draw, so equal engine states give equal eigenstates.
inline Eigenstate collapse(const OccupancyDistribution& dist, std::mt19937_64& engine) {
    const long long N = dist.sites();
    if (N < 0) throw RangeError("occupancy distribution has no states");
    const double u = uniform01(engine);
    double acc = 0.0;
    long long last_positive = -1;
    for (long long c = 0; c <= N; ++c) {
        const double w = dist.weights[static_cast<std::size_t>(c)];
        if (w > 0.0) last_positive = c;
        acc += w;
        if (u < acc) return Eigenstate{c, N - c};
    }
    // Rounding pushed the CDF fractionally below 1; highest supported state.
    if (last_positive < 0) throw InvalidProbability("collapse on all-zero weights");
    return Eigenstate{last_positive, N - last_positive};
}

struct JointBodyState {
    // Region id -> post-bias occupancy mixture.
    std::map<std::string, OccupancyDistribution> regions;
};

// Collapse every region with its own substream derived from the region id,
// so results are independent of map iteration order and of region set
// composition: stream -> [fnv1a64(region id)].
inline std::map<std::string, Eigenstate> joint_collapse(const JointBodyState& state,
                                                        const RngStream& stream) {
    std::map<std::string, Eigenstate> out;
    for (const auto& [id, dist] : state.regions) {
        std::mt19937_64 engine = stream.derived(id).engine();
        out.emplace(id, collapse(dist, engine));
    }
    return out;
}

} // namespace opetsim
