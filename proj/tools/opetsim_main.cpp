// Command-line front end. Four subcommands share one config format:
//
//   calibrate  resolve the injection ratio and threshold dose, write them out
//   simulate   run the replicate experiments and the paired hypothesis test
//   power      sweep the (lambda, size, background) grid for rejection rates
//   report     dump eigenstate distributions and closed-form effect sizes
//
// Outputs are plain files under --out (or $OPETSIM_OUT, or the working
// directory) and are byte-stable for a fixed config and seed.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "opetsim/config.hpp"
#include "opetsim/io.hpp"

namespace fs = std::filesystem;
using namespace opetsim;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
};

void add_common_options(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    CLI::Option* seed = sub->add_option("--seed", args.seed, "override simulation.master_seed");
    sub->parse_complete_callback([seed, &args] { args.seed_set = seed->count() > 0; });
    sub->add_option("--out", args.out_dir,
                    "output directory (default: $OPETSIM_OUT or the working directory)");
}

fs::path resolve_out_dir(const CommonArgs& args) {
    std::string dir = args.out_dir;
    if (dir.empty()) {
        const char* env = std::getenv("OPETSIM_OUT");
        dir = env && *env ? env : ".";
    }
    fs::path path(dir);
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec && !fs::is_directory(path))
        throw IoError("cannot create output directory '" + path.string() + "'");
    return path;
}

ExperimentConfig load_effective_config(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (args.seed_set) cfg.simulation.master_seed = args.seed;
    return cfg;
}

void emit(const fs::path& out_dir, const std::string& name, const std::string& content) {
    const fs::path path = out_dir / name;
    write_text_file(path.string(), content);
    std::cout << "wrote " << path.string() << "\n";
}

void write_resolved_config(const ExperimentConfig& cfg, const fs::path& out_dir) {
    emit(out_dir, "resolved_config.json", serialize_config(cfg));
}

std::vector<ExperimentResult> run_replicates(const ProtocolRunner& runner,
                                             const ExperimentConfig& cfg) {
    const RngStream master(cfg.simulation.master_seed);
    std::vector<ExperimentResult> results;
    results.reserve(static_cast<std::size_t>(cfg.simulation.replicates));
    for (long long i = 0; i < cfg.simulation.replicates; ++i)
        results.push_back(runner.run_replicate(master, static_cast<std::uint64_t>(i)));
    return results;
}

int cmd_calibrate(const CommonArgs& args) {
    const ExperimentConfig cfg = load_effective_config(args);
    const fs::path out_dir = resolve_out_dir(args);
    const ProtocolRunner runner(cfg.subject, cfg.protocol, cfg.bias, cfg.detector);
    write_resolved_config(cfg, out_dir);
    emit(out_dir, "calibration.csv", calibration_to_csv(runner));
    std::cout << "ratio " << format_double(runner.ratio()) << ", threshold dose "
              << format_double(runner.threshold_dose()) << ", subpharmacological dose "
              << format_double(runner.subpharmacological_dose()) << "\n";
    return 0;
}

int cmd_simulate(const CommonArgs& args) {
    const ExperimentConfig cfg = load_effective_config(args);
    const fs::path out_dir = resolve_out_dir(args);
    const ProtocolRunner runner(cfg.subject, cfg.protocol, cfg.bias, cfg.detector);
    const std::vector<ExperimentResult> results = run_replicates(runner, cfg);
    const HypothesisReport report =
        test_hypothesis(results, cfg.analysis.alpha, cfg.analysis.bonferroni);

    write_resolved_config(cfg, out_dir);
    emit(out_dir, "calibration.csv", calibration_to_csv(runner));
    emit(out_dir, "results.csv", results_to_csv(results));
    emit(out_dir, "hypothesis_report.json",
         hypothesis_report_to_json(report, config_digest(cfg)).dump(2) + "\n");

    for (const RoiHypothesis& h : report.rois)
        std::cout << h.roi << ": p=" << format_double(h.p_value)
                  << (h.reject ? " reject" : " retain") << "\n";
    return 0;
}

int cmd_power(const CommonArgs& args) {
    const ExperimentConfig cfg = load_effective_config(args);
    const fs::path out_dir = resolve_out_dir(args);
    const RngStream master(cfg.simulation.master_seed);
    const PowerSurface surface =
        power_curve(cfg.subject, cfg.protocol, cfg.detector, cfg.analysis.grids(),
                    cfg.analysis.alpha, cfg.analysis.bonferroni,
                    cfg.analysis.power_replications, cfg.simulation.replicates, master);

    write_resolved_config(cfg, out_dir);
    emit(out_dir, "power_surface.csv", power_surface_to_csv(surface));
    std::cout << surface.cells.size() << " cells, " << surface.replications
              << " replications each\n";
    return 0;
}

int cmd_report(const CommonArgs& args) {
    const ExperimentConfig cfg = load_effective_config(args);
    const fs::path out_dir = resolve_out_dir(args);

    // The report characterizes the deterministic core of the experiment, so
    // it always uses the noiseless scanner variant of the protocol.
    ProtocolSettings settings = cfg.protocol;
    settings.kind = ProtocolKind::pet;
    settings.between_subject_cv = 0.0;
    const ProtocolRunner biased(cfg.subject, settings, cfg.bias, cfg.detector);
    const ProtocolRunner baseline(cfg.subject, settings, BiasModel{}, cfg.detector);

    const RngStream unused(0);
    std::vector<DistributionRow> rows;
    nlohmann::json regions = nlohmann::json::array();
    for (const RegionSpec& region : cfg.subject.regions) {
        nlohmann::json region_node = nlohmann::json::object();
        region_node["id"] = region.id;
        region_node["pain_responsive"] = region.pain_responsive;
        region_node["pain_intensity"] = region.pain_intensity;
        const GateInputs gate{DoseClass::threshold, region.pain_responsive,
                              region.pain_intensity};
        const bool gated = cfg.bias.gate_active(gate);
        region_node["collapse_bias_active"] = gated;

        nlohmann::json populations = nlohmann::json::array();
        for (const DoseClass dose_class :
             {DoseClass::threshold, DoseClass::subpharmacological}) {
            const auto biased_state = biased.injection_state(dose_class, unused);
            const auto baseline_state = baseline.injection_state(dose_class, unused);
            for (const auto& [pop, dist] : biased_state.at(region.id)) {
                const OccupancyDistribution& flat = baseline_state.at(region.id).at(pop);
                for (std::size_t c = 0; c < dist.weights.size(); ++c) {
                    DistributionRow row;
                    row.region = region.id;
                    row.population = pop;
                    row.dose_class = dose_class;
                    row.bound_agonist = static_cast<long long>(c);
                    row.baseline_weight = flat.weights[c];
                    row.biased_weight = dist.weights[c];
                    rows.push_back(row);
                }
                if (dose_class != DoseClass::threshold) continue;
                nlohmann::json pop_node = nlohmann::json::object();
                pop_node["population"] = pop;
                const long long sites = dist.sites();
                pop_node["sites"] = sites;
                if (sites >= 1) {
                    const double p = agonist_attach_probability(
                        cfg.subject.agonist, cfg.subject.antagonist, biased.ratio(), pop);
                    const EffectSize effect =
                        effect_size(sites, p, gated ? cfg.bias.lambda : 0.0);
                    pop_node["attach_probability"] = p;
                    pop_node["biased_attach_probability"] = effect.biased_attach_probability;
                    pop_node["baseline_mean_ratio"] = effect.baseline_mean_ratio;
                    pop_node["biased_mean_ratio"] = effect.biased_mean_ratio;
                    pop_node["delta_mean_ratio"] = effect.delta_mean_ratio;
                    pop_node["baseline_undefined_mass"] = effect.baseline_undefined_mass;
                    pop_node["biased_undefined_mass"] = effect.biased_undefined_mass;
                }
                populations.push_back(pop_node);
            }
        }
        region_node["populations"] = populations;
        regions.push_back(region_node);
    }

    nlohmann::json doc = nlohmann::json::object();
    doc["config_digest"] = config_digest(cfg);
    doc["ratio"] = biased.ratio();
    doc["threshold_dose"] = biased.threshold_dose();
    doc["subpharmacological_dose"] = biased.subpharmacological_dose();
    doc["lambda"] = cfg.bias.lambda;
    doc["regions"] = regions;

    write_resolved_config(cfg, out_dir);
    emit(out_dir, "distributions.csv", distributions_to_csv(rows));
    emit(out_dir, "report.json", doc.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"opiate receptor imaging simulator"};
    app.require_subcommand(1);

    CommonArgs calibrate_args, simulate_args, power_args, report_args;
    CLI::App* calibrate = app.add_subcommand("calibrate", "resolve ratio and threshold dose");
    add_common_options(calibrate, calibrate_args);
    CLI::App* simulate = app.add_subcommand("simulate", "run replicates and hypothesis test");
    add_common_options(simulate, simulate_args);
    CLI::App* power = app.add_subcommand("power", "rejection rates over a parameter grid");
    add_common_options(power, power_args);
    CLI::App* report = app.add_subcommand("report", "eigenstate distributions and effect sizes");
    add_common_options(report, report_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (calibrate->parsed()) return cmd_calibrate(calibrate_args);
        if (simulate->parsed()) return cmd_simulate(simulate_args);
        if (power->parsed()) return cmd_power(power_args);
        return cmd_report(report_args);
    } catch (const SimulationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
