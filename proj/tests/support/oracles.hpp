#pragma once

// Independent reference implementations used only by tests. Everything here
// recomputes expected values by a different route than the library (direct
// enumeration, fixed-point iteration, numerical quadrature), so agreement is
// evidence rather than tautology.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace oracle {

struct PopulationBound {
    double agonist = 0.0;
    double antagonist = 0.0;
    double endogenous = 0.0;
};

// Mass-action equilibrium for one population, solved by fixed-point
// iteration on the free-site count F = S - b_endogenous with the injected
// species treated as tracers: b_i = F * c_i * k_i.
inline PopulationBound bound_by_fixed_point(double sites, double c_agonist, double k_agonist,
                                            double c_antagonist, double k_antagonist,
                                            double c_endogenous, double k_endogenous) {
    double free_sites = sites;
    bool converged = false;
    for (int i = 0; i < 100000; ++i) {
        const double next = sites - c_endogenous * k_endogenous * free_sites;
        if (std::abs(next - free_sites) <= 1e-14 * std::max(1.0, sites)) {
            free_sites = next;
            converged = true;
            break;
        }
        free_sites = next;
    }
    if (!converged) throw std::runtime_error("fixed point did not converge");
    PopulationBound b;
    b.agonist = free_sites * c_agonist * k_agonist;
    b.antagonist = free_sites * c_antagonist * k_antagonist;
    b.endogenous = free_sites * c_endogenous * k_endogenous;
    return b;
}

// Composite Simpson quadrature (panels must be even).
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
    const double h = (b - a) / panels;
    double acc = f(a) + f(b);
    for (int i = 1; i < panels; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// Distribution of the one-bit count over all 2^N site configurations, each
// site independently agonist with probability p. Exhaustive enumeration; no
// binomial coefficients anywhere.
inline std::vector<double> enumerated_site_distribution(int n_sites, double p) {
    if (n_sites < 0 || n_sites > 20) throw std::runtime_error("enumeration limited to 20 sites");
    std::vector<double> weights(static_cast<std::size_t>(n_sites) + 1, 0.0);
    const std::uint64_t total = 1ULL << n_sites;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        const int ones = std::popcount(mask);
        weights[static_cast<std::size_t>(ones)] +=
            std::pow(p, ones) * std::pow(1.0 - p, n_sites - ones);
    }
    return weights;
}

// Same enumeration with each configuration's weight multiplied by
// exp(lambda * ones), then normalized.
inline std::vector<double> enumerated_tilted_distribution(int n_sites, double p, double lambda) {
    std::vector<double> weights(static_cast<std::size_t>(n_sites) + 1, 0.0);
    const std::uint64_t total = 1ULL << n_sites;
    double norm = 0.0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        const int ones = std::popcount(mask);
        const double w =
            std::pow(p, ones) * std::pow(1.0 - p, n_sites - ones) * std::exp(lambda * ones);
        weights[static_cast<std::size_t>(ones)] += w;
        norm += w;
    }
    for (double& w : weights) w /= norm;
    return weights;
}

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

// P(X >= k), X ~ Binomial(n, 1/2), summed in log space via lgamma. Valid for
// any n, unlike the library's exact path.
inline double binomial_half_tail_lgamma(long long n, long long k) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    const double log_half_n = -static_cast<double>(n) * std::numbers::ln2;
    const double log_n_fact = std::lgamma(static_cast<double>(n) + 1.0);
    double tail = 0.0;
    for (long long i = k; i <= n; ++i) {
        const double log_term = log_n_fact - std::lgamma(static_cast<double>(i) + 1.0) -
                                std::lgamma(static_cast<double>(n - i) + 1.0) + log_half_n;
        tail += std::exp(log_term);
    }
    return std::min(1.0, tail);
}

// Two-sided Mann-Whitney rank-sum p-value, normal approximation with tie
// correction and continuity correction. Used to check that a distribution is
// unchanged between two samples.
inline double rank_sum_p_two_sided(std::vector<double> x, std::vector<double> y) {
    const std::size_t nx = x.size();
    const std::size_t ny = y.size();
    if (nx == 0 || ny == 0) throw std::runtime_error("rank sum needs nonempty samples");
    struct Tagged {
        double value;
        bool from_x;
    };
    std::vector<Tagged> all;
    all.reserve(nx + ny);
    for (double v : x) all.push_back({v, true});
    for (double v : y) all.push_back({v, false});
    std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) {
        return a.value < b.value;
    });

    double rank_sum_x = 0.0;
    double tie_term = 0.0;
    std::size_t i = 0;
    std::size_t assigned = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].value == all[i].value) ++j;
        const double count = static_cast<double>(j - i);
        const double mean_rank = static_cast<double>(assigned) + 0.5 * (count + 1.0);
        for (std::size_t k = i; k < j; ++k)
            if (all[k].from_x) rank_sum_x += mean_rank;
        tie_term += count * (count * count - 1.0);
        assigned += j - i;
        i = j;
    }

    const double n = static_cast<double>(nx + ny);
    const double u = rank_sum_x - static_cast<double>(nx) * (static_cast<double>(nx) + 1.0) / 2.0;
    const double mean_u = static_cast<double>(nx) * static_cast<double>(ny) / 2.0;
    const double var_u = static_cast<double>(nx) * static_cast<double>(ny) / 12.0 *
                         ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var_u <= 0.0) return 1.0;
    const double z = (std::abs(u - mean_u) - 0.5) / std::sqrt(var_u);
    if (z <= 0.0) return 1.0;
    return std::min(1.0, 2.0 * normal_upper_tail(z));
}

// Wilson-Hilferty approximation to the chi-square quantile. Good to well
// under a percent for df >= 4; callers add their own slack.
inline double chi_square_critical(int df, double upper_tail_prob) {
    // Inverse normal via Acklam's rational approximation on the upper tail.
    const double p = 1.0 - upper_tail_prob;
    auto inverse_normal = [](double q) {
        if (q <= 0.0 || q >= 1.0) throw std::runtime_error("quantile outside (0,1)");
        static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
        static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
        static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00, 2.938163982698783e+00};
        static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
        const double p_low = 0.02425;
        double x;
        if (q < p_low) {
            const double r = std::sqrt(-2.0 * std::log(q));
            x = (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
                ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
        } else if (q <= 1.0 - p_low) {
            const double r = q - 0.5;
            const double s = r * r;
            x = (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * r /
                (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
        } else {
            const double r = std::sqrt(-2.0 * std::log(1.0 - q));
            x = -(((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
                ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
        }
        return x;
    };
    const double z = inverse_normal(p);
    const double dfd = static_cast<double>(df);
    const double term = 1.0 - 2.0 / (9.0 * dfd) + z * std::sqrt(2.0 / (9.0 * dfd));
    return dfd * term * term * term;
}

inline double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size() - 1);
}

} // namespace oracle
