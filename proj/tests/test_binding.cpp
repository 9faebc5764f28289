#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "opetsim/binding.hpp"
#include "support/oracles.hpp"

using namespace opetsim;

namespace {

LigandSpec make_agonist(double k_mu, double potency = 1.0) {
    LigandSpec l;
    l.name = "ago";
    l.role = LigandRole::agonist;
    l.affinity["mu"] = k_mu;
    l.analgesic_potency = potency;
    return l;
}

LigandSpec make_antagonist(double k_mu) {
    LigandSpec l;
    l.name = "anta";
    l.role = LigandRole::antagonist;
    l.affinity["mu"] = k_mu;
    return l;
}

LigandSpec make_endogenous(double k_mu) {
    LigandSpec l;
    l.name = "endo";
    l.role = LigandRole::agonist;
    if (k_mu > 0.0) l.affinity["mu"] = k_mu;
    return l;
}

RegionSpec make_region(const std::string& id, long long sites, double intensity = 0.0,
                       double secretion = 0.0, bool pain = false) {
    RegionSpec r;
    r.id = id;
    r.receptor_count["mu"] = sites;
    r.pain_responsive = pain;
    r.pain_intensity = intensity;
    r.secretion_per_intensity = secretion;
    return r;
}

InjectionProtocol make_injection(double dose, double ratio) {
    InjectionProtocol p;
    p.total_dose = dose;
    p.ratio_R = ratio;
    return p;
}

} // namespace

TEST_CASE("equilibrium matches independent fixed-point solver") {
    std::mt19937_64 gen(777);
    std::uniform_real_distribution<double> usites(100.0, 1e6);
    std::uniform_real_distribution<double> uconc(0.0, 10.0);
    std::uniform_real_distribution<double> uk(0.0, 0.01);
    std::uniform_real_distribution<double> uendo(0.0, 0.8);

    BindingOptions wide;
    wide.saturation_cap = 1.0;

    for (int trial = 0; trial < 300; ++trial) {
        const double sites = usites(gen);
        const double dose = 1.0 + uconc(gen);
        const double ratio = 0.1 + uconc(gen);
        const double k_a = uk(gen);
        const double k_aa = uk(gen);
        const double k_e = uk(gen);
        // Keep the endogenous load inside the contraction region of the
        // oracle's iteration.
        const double c_e = k_e > 0.0 ? uendo(gen) / k_e : 0.0;

        RegionSpec region = make_region("roi", static_cast<long long>(sites));
        region.secretion_per_intensity = c_e;
        region.pain_intensity = 1.0;
        LigandSpec ago = make_agonist(k_a);
        LigandSpec anta = make_antagonist(k_aa);
        LigandSpec endo = make_endogenous(k_e);
        InjectionProtocol inj = make_injection(dose, ratio);

        BoundCounts bound = equilibrium_occupancy(region, ago, anta, endo, inj, wide);
        const double s = static_cast<double>(region.receptor_count["mu"]);
        oracle::PopulationBound expected = oracle::bound_by_fixed_point(
            s, inj.agonist_dose(), k_a, inj.antagonist_dose(), k_aa, c_e, k_e);

        const PopulationBound& got = bound.populations.at("mu");
        const double scale = std::max({1.0, expected.agonist, expected.antagonist,
                                       expected.endogenous});
        CHECK(std::abs(got.agonist - expected.agonist) <= 1e-9 * scale);
        CHECK(std::abs(got.antagonist - expected.antagonist) <= 1e-9 * scale);
        CHECK(std::abs(got.endogenous - expected.endogenous) <= 1e-9 * scale);
    }
}

TEST_CASE("bound exogenous ligand is exactly linear in dose") {
    RegionSpec region = make_region("roi", 1000000, 0.6, 2.0);
    LigandSpec ago = make_agonist(2e-5);
    LigandSpec anta = make_antagonist(3e-5);
    LigandSpec endo = make_endogenous(1e-4);

    BoundCounts base = equilibrium_occupancy(region, ago, anta, endo, make_injection(50.0, 1.5));
    BoundCounts doubled =
        equilibrium_occupancy(region, ago, anta, endo, make_injection(100.0, 1.5));

    const PopulationBound& b1 = base.populations.at("mu");
    const PopulationBound& b2 = doubled.populations.at("mu");
    CHECK(b2.agonist == Catch::Approx(2.0 * b1.agonist).epsilon(1e-12));
    CHECK(b2.antagonist == Catch::Approx(2.0 * b1.antagonist).epsilon(1e-12));
    CHECK(b2.endogenous == Catch::Approx(b1.endogenous).epsilon(1e-12));
}

TEST_CASE("raising secretion strictly lowers exogenous binding, preserves proportions") {
    LigandSpec ago = make_agonist(2e-5);
    LigandSpec anta = make_antagonist(3e-5);
    LigandSpec endo = make_endogenous(5e-4);
    InjectionProtocol inj = make_injection(50.0, 1.5);

    RegionSpec calm = make_region("roi", 1000000, 0.0, 40.0);
    RegionSpec hurting = make_region("roi", 1000000, 1.0, 40.0);

    BoundCounts quiet = equilibrium_occupancy(calm, ago, anta, endo, inj);
    BoundCounts loud = equilibrium_occupancy(hurting, ago, anta, endo, inj);

    const PopulationBound& q = quiet.populations.at("mu");
    const PopulationBound& l = loud.populations.at("mu");
    CHECK(l.agonist < q.agonist);
    CHECK(l.antagonist < q.antagonist);
    CHECK(l.agonist / l.antagonist == Catch::Approx(q.agonist / q.antagonist).epsilon(1e-12));
}

TEST_CASE("saturation cap is enforced") {
    RegionSpec region = make_region("roi", 1000);
    LigandSpec ago = make_agonist(1e-3);
    LigandSpec anta = make_antagonist(1e-3);
    LigandSpec endo = make_endogenous(0.0);

    // Occupied fraction is dose * k / 1 here: 0.1 exactly at dose 100.
    CHECK_NOTHROW(equilibrium_occupancy(region, ago, anta, endo, make_injection(100.0, 1.0)));
    CHECK_THROWS_AS(equilibrium_occupancy(region, ago, anta, endo, make_injection(101.0, 1.0)),
                    SaturationExceeded);
}

TEST_CASE("injection validation") {
    CHECK_THROWS_AS(equilibrium_occupancy(make_region("r", 10), make_agonist(1e-3),
                                          make_antagonist(1e-3), make_endogenous(0.0),
                                          make_injection(0.0, 1.0)),
                    InvalidDose);
    CHECK_THROWS_AS(equilibrium_occupancy(make_region("r", 10), make_agonist(1e-3),
                                          make_antagonist(1e-3), make_endogenous(0.0),
                                          make_injection(-5.0, 1.0)),
                    InvalidDose);
    InjectionProtocol bad_window = make_injection(1.0, 1.0);
    bad_window.scan_duration_minutes = 0.0;
    CHECK_THROWS_AS(bad_window.validate(), InvalidWindow);

    InjectionProtocol split = make_injection(100.0, 3.0);
    CHECK(split.agonist_dose() == Catch::Approx(75.0).epsilon(1e-12));
    CHECK(split.antagonist_dose() == Catch::Approx(25.0).epsilon(1e-12));
    CHECK(split.agonist_dose() + split.antagonist_dose() ==
          Catch::Approx(split.total_dose).epsilon(1e-12));
}

TEST_CASE("spec validation of ligands and regions") {
    LigandSpec bad_anta = make_antagonist(1e-3);
    bad_anta.analgesic_potency = 0.5;
    CHECK_THROWS_AS(bad_anta.validate(), RangeError);

    LigandSpec no_binding = make_agonist(0.0);
    CHECK_THROWS_AS(no_binding.validate(true), RangeError);
    CHECK_NOTHROW(no_binding.validate(false));

    LigandSpec negative = make_agonist(-1e-3);
    CHECK_THROWS_AS(negative.validate(), RangeError);

    RegionSpec region = make_region("roi", 100);
    region.pain_intensity = 1.5;
    CHECK_THROWS_AS(region.validate(), RangeError);
    region.pain_intensity = 0.5;
    region.pixel_count = 0;
    CHECK_THROWS_AS(region.validate(), RangeError);

    RegionSpec quiet = make_region("roi", 100, 0.0, 3.0);
    CHECK(quiet.endogenous_concentration() == 0.0);
    RegionSpec half = make_region("roi", 100, 0.5, 3.0);
    CHECK(half.endogenous_concentration() == Catch::Approx(1.5));
}

TEST_CASE("attach probability follows relative affinity-weighted dose") {
    LigandSpec ago = make_agonist(1e-4);
    LigandSpec anta = make_antagonist(1e-4);
    CHECK(agonist_attach_probability(ago, anta, 1.0, "mu") == Catch::Approx(0.5).epsilon(1e-15));
    CHECK(agonist_attach_probability(ago, anta, 3.0, "mu") == Catch::Approx(0.75).epsilon(1e-15));

    LigandSpec strong = make_agonist(2e-4);
    CHECK(agonist_attach_probability(strong, anta, 1.0, "mu") ==
          Catch::Approx(2.0 / 3.0).epsilon(1e-15));

    CHECK_THROWS_AS(agonist_attach_probability(make_agonist(0.0), make_antagonist(0.0), 1.0, "mu"),
                    ZeroAffinity);
    CHECK_THROWS_AS(agonist_attach_probability(ago, anta, 0.0, "mu"), RangeError);
}

TEST_CASE("attach probability is consistent with equilibrium proportions under secretion") {
    RegionSpec region = make_region("roi", 500000, 0.9, 10.0);
    LigandSpec ago = make_agonist(3e-5);
    LigandSpec anta = make_antagonist(7e-5);
    LigandSpec endo = make_endogenous(2e-3);
    InjectionProtocol inj = make_injection(20.0, 2.5);

    BoundCounts bound = equilibrium_occupancy(region, ago, anta, endo, inj);
    const PopulationBound& b = bound.populations.at("mu");
    const double from_equilibrium = b.agonist / (b.agonist + b.antagonist);
    const double direct = agonist_attach_probability(ago, anta, 2.5, "mu");
    CHECK(from_equilibrium == Catch::Approx(direct).epsilon(1e-12));
}

TEST_CASE("balancing ratio on a single population inverts the affinity ratio") {
    std::vector<RegionSpec> regions{make_region("roi", 100000)};
    LigandSpec endo = make_endogenous(0.0);

    const double r_equal = choose_balancing_ratio(make_agonist(1e-4), make_antagonist(1e-4),
                                                  regions, endo);
    CHECK(r_equal == Catch::Approx(1.0).epsilon(1e-9));

    const double r_strong = choose_balancing_ratio(make_agonist(2e-4), make_antagonist(1e-4),
                                                   regions, endo);
    CHECK(r_strong == Catch::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("balancing ratio agrees with a grid-search bracket over mixed regions") {
    std::vector<RegionSpec> regions;
    regions.push_back(make_region("r1", 200000, 1.0, 5.0));
    regions.push_back(make_region("r2", 50000));
    regions[0].receptor_count["kappa"] = 80000;

    LigandSpec ago = make_agonist(3e-5);
    ago.affinity["kappa"] = 1e-5;
    LigandSpec anta = make_antagonist(6e-5);
    anta.affinity["kappa"] = 4e-5;
    LigandSpec endo = make_endogenous(1e-3);
    endo.affinity["kappa"] = 2e-3;

    auto imbalance = [&](double R) {
        double total = 0.0;
        for (const RegionSpec& region : regions) {
            const double c_e = region.endogenous_concentration();
            for (const auto& [pop, sites] : region.receptor_count) {
                oracle::PopulationBound b = oracle::bound_by_fixed_point(
                    static_cast<double>(sites), R / (1.0 + R), ago.affinity_for(pop),
                    1.0 / (1.0 + R), anta.affinity_for(pop), c_e, endo.affinity_for(pop));
                total += b.agonist - b.antagonist;
            }
        }
        return total;
    };

    const double found = choose_balancing_ratio(ago, anta, regions, endo);

    // Bracket by grid search in log R, independent of the bisection.
    const int grid = 10000;
    double lo = 0.0;
    double hi = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double r1 = std::exp(std::lerp(std::log(1e-4), std::log(1e4),
                                             static_cast<double>(i) / grid));
        const double r2 = std::exp(std::lerp(std::log(1e-4), std::log(1e4),
                                             static_cast<double>(i + 1) / grid));
        if ((imbalance(r1) < 0.0) != (imbalance(r2) < 0.0)) {
            lo = r1;
            hi = r2;
            break;
        }
    }
    REQUIRE(lo > 0.0);
    CHECK(found >= lo);
    CHECK(found <= hi);
    // Residual imbalance is negligible against the total bound scale.
    double scale = 0.0;
    for (const RegionSpec& region : regions)
        for (const auto& [pop, sites] : region.receptor_count)
            scale += static_cast<double>(sites) * ago.affinity_for(pop);
    CHECK(std::abs(imbalance(found)) <= 1e-9 * scale);
}

TEST_CASE("balancing fails when one side cannot bind") {
    std::vector<RegionSpec> regions{make_region("roi", 100000)};
    LigandSpec mute = make_agonist(1e-4);
    mute.affinity["mu"] = 0.0;
    CHECK_THROWS_AS(
        choose_balancing_ratio(mute, make_antagonist(1e-4), regions, make_endogenous(0.0)),
        NoBalancePossible);
}

TEST_CASE("dose calibration meets the analgesia threshold tightly") {
    std::vector<RegionSpec> regions;
    regions.push_back(make_region("r1", 400000, 0.7, 8.0, true));
    regions.push_back(make_region("r2", 150000));
    LigandSpec ago = make_agonist(2e-5, 0.003);
    LigandSpec anta = make_antagonist(2e-5);
    LigandSpec endo = make_endogenous(8e-4);
    const double ratio = 1.0;
    const double threshold = 5.0;

    CalibrationResult cal =
        calibrate_threshold_dose(regions, ago, anta, endo, ratio, threshold);

    auto analgesia = [&](double dose) {
        double total = 0.0;
        for (const RegionSpec& region : regions) {
            oracle::PopulationBound b = oracle::bound_by_fixed_point(
                static_cast<double>(region.receptor_count.at("mu")),
                dose * ratio / (1.0 + ratio), ago.affinity_for("mu"), dose / (1.0 + ratio),
                anta.affinity_for("mu"), region.endogenous_concentration(),
                endo.affinity_for("mu"));
            total += b.agonist;
        }
        return total * ago.analgesic_potency;
    };

    CHECK(analgesia(cal.threshold_dose) >= threshold * (1.0 - 1e-9));
    CHECK(analgesia(cal.threshold_dose * (1.0 - 5e-6)) < threshold);
    CHECK(cal.threshold_dose <= cal.dose_cap);

    // The dose itself never saturates any region.
    InjectionProtocol inj = make_injection(cal.threshold_dose, ratio);
    for (const RegionSpec& region : regions)
        CHECK_NOTHROW(equilibrium_occupancy(region, ago, anta, endo, inj));

    CalibrationResult firmer =
        calibrate_threshold_dose(regions, ago, anta, endo, ratio, 2.0 * threshold);
    CHECK(firmer.threshold_dose > cal.threshold_dose);
    CHECK(firmer.threshold_dose == Catch::Approx(2.0 * cal.threshold_dose).epsilon(1e-4));
}

TEST_CASE("calibration reports unreachable thresholds") {
    std::vector<RegionSpec> regions{make_region("roi", 1000)};
    LigandSpec numb = make_agonist(1e-3, 0.0);
    CHECK_THROWS_AS(calibrate_threshold_dose(regions, numb, make_antagonist(1e-3),
                                             make_endogenous(0.0), 1.0, 1.0),
                    ThresholdUnreachable);

    // Cap reached first: only 100 sites, cap admits 10 bound, threshold
    // demands an analgesia needing 50 bound agonist molecules.
    std::vector<RegionSpec> tiny{make_region("roi", 100)};
    LigandSpec weak = make_agonist(1e-3, 1.0);
    CHECK_THROWS_AS(calibrate_threshold_dose(tiny, weak, make_antagonist(1e-3),
                                             make_endogenous(0.0), 1.0, 50.0),
                    ThresholdUnreachable);

    // Endogenous occupancy alone sits above the cap.
    std::vector<RegionSpec> flooded{make_region("roi", 1000, 1.0, 1000.0)};
    CHECK_THROWS_AS(calibrate_threshold_dose(flooded, make_agonist(1e-3, 1.0),
                                             make_antagonist(1e-3), make_endogenous(1e-2), 1.0,
                                             1.0),
                    ThresholdUnreachable);

    CHECK_THROWS_AS(calibrate_threshold_dose(regions, make_agonist(1e-3, 1.0),
                                             make_antagonist(1e-3), make_endogenous(0.0), 1.0,
                                             0.0),
                    RangeError);
}

TEST_CASE("calibrated dose lands within one step of an independent grid scan") {
    std::vector<RegionSpec> regions{make_region("roi", 1000000, 0.4, 4.0)};
    LigandSpec ago = make_agonist(1e-5, 0.01);
    LigandSpec anta = make_antagonist(1.4e-5);
    LigandSpec endo = make_endogenous(3e-4);

    CalibrationResult cal = calibrate_threshold_dose(regions, ago, anta, endo, 2.0, 7.0);

    auto analgesia = [&](double dose) {
        oracle::PopulationBound b = oracle::bound_by_fixed_point(
            1000000.0, dose * 2.0 / 3.0, 1e-5, dose / 3.0, 1.4e-5,
            regions[0].endogenous_concentration(), 3e-4);
        return b.agonist * 0.01;
    };

    const int grid = 10000;
    double first_reaching = -1.0;
    for (int i = 1; i <= grid; ++i) {
        const double dose = cal.dose_cap * static_cast<double>(i) / grid;
        if (analgesia(dose) >= 7.0) {
            first_reaching = dose;
            break;
        }
    }
    REQUIRE(first_reaching > 0.0);
    const double step = cal.dose_cap / grid;
    CHECK(cal.threshold_dose <= first_reaching * (1.0 + 2e-6));
    CHECK(cal.threshold_dose >= first_reaching - step);
}
