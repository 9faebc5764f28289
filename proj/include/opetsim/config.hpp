#pragma once

// JSON experiment configuration.
//
// The document is strict: every object rejects keys it does not know, every
// numeric field is range-checked, and errors carry the slash-separated path
// of the offending field. Serialization is canonical (sorted keys, two-space
// indent, trailing newline), so parse -> serialize -> parse is the identity
// on resolved configs and byte-equal serializations mean equal configs.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "opetsim/analysis.hpp"
#include "opetsim/errors.hpp"
#include "opetsim/rng.hpp"
#include "opetsim/scanner.hpp"

namespace opetsim {

inline constexpr int kConfigSchemaVersion = 1;

struct SimulationSettings {
    long long replicates = 100;
    std::uint64_t master_seed = 1;

    void validate() const {
        if (replicates < 2) throw RangeError("/simulation/replicates: must be >= 2");
    }
};

struct AnalysisSettings {
    double alpha = 0.05;
    bool bonferroni = false;
    std::vector<double> lambda_grid{0.0, 0.5, 1.0, 2.0};
    std::vector<long long> size_grid{10, 20, 40};
    std::vector<double> background_grid{0.0};
    SizeAxis size_axis = SizeAxis::replicates;
    long long power_replications = 200;

    PowerGrids grids() const {
        PowerGrids g;
        g.lambda_grid = lambda_grid;
        g.size_grid = size_grid;
        g.background_grid = background_grid;
        g.size_axis = size_axis;
        return g;
    }

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("/analysis/alpha: must lie in (0, 1)");
        if (power_replications < 100)
            throw RangeError("/analysis/power_replications: must be >= 100");
        try {
            grids().validate();
        } catch (const RangeError& e) {
            throw RangeError(std::string("/analysis: ") + e.what());
        }
    }
};

struct ExperimentConfig {
    SubjectConfig subject;
    ProtocolSettings protocol;
    BiasModel bias;
    DetectorModel detector;
    SimulationSettings simulation;
    AnalysisSettings analysis;

    void validate() const {
        subject.validate();
        protocol.validate();
        bias.validate();
        detector.validate();
        simulation.validate();
        analysis.validate();
    }
};

namespace config_detail {

using nlohmann::json;

[[noreturn]] inline void fail_schema(const std::string& path, const std::string& what) {
    throw SchemaError(path + ": " + what);
}

inline void expect_object(const json& node, const std::string& path) {
    if (!node.is_object()) fail_schema(path, "expected an object");
}

inline void reject_unknown_keys(const json& node, const std::string& path,
                                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : node.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known) fail_schema(path, "unknown key '" + key + "'");
    }
}

inline double read_double(const json& node, const std::string& path, const char* key,
                          double fallback) {
    if (!node.contains(key)) return fallback;
    const json& v = node.at(key);
    if (!v.is_number()) fail_schema(path + "/" + key, "expected a number");
    return v.get<double>();
}

inline long long read_integer(const json& node, const std::string& path, const char* key,
                              long long fallback) {
    if (!node.contains(key)) return fallback;
    const json& v = node.at(key);
    if (!v.is_number_integer()) fail_schema(path + "/" + key, "expected an integer");
    return v.get<long long>();
}

inline bool read_bool(const json& node, const std::string& path, const char* key,
                      bool fallback) {
    if (!node.contains(key)) return fallback;
    const json& v = node.at(key);
    if (!v.is_boolean()) fail_schema(path + "/" + key, "expected a boolean");
    return v.get<bool>();
}

inline std::string read_string(const json& node, const std::string& path, const char* key,
                               const std::string& fallback) {
    if (!node.contains(key)) return fallback;
    const json& v = node.at(key);
    if (!v.is_string()) fail_schema(path + "/" + key, "expected a string");
    return v.get<std::string>();
}

// Identifiers end up as CSV cells and stream tags; keep them boring.
inline void check_identifier(const std::string& value, const std::string& path) {
    if (value.empty()) throw RangeError(path + ": identifier must be nonempty");
    for (char ch : value) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                        (ch >= '0' && ch <= '9') || ch == '_' || ch == '.' || ch == '-';
        if (!ok)
            throw RangeError(path + ": identifier '" + value +
                             "' may use only letters, digits, '_', '.', '-'");
    }
}

// "auto" or a number; unset means the fallback policy (also "auto").
inline std::optional<double> read_auto_or_number(const json& node, const std::string& path,
                                                 const char* key) {
    if (!node.contains(key)) return std::nullopt;
    const json& v = node.at(key);
    if (v.is_string()) {
        if (v.get<std::string>() == "auto") return std::nullopt;
        fail_schema(path + "/" + key, "expected a number or \"auto\"");
    }
    if (!v.is_number()) fail_schema(path + "/" + key, "expected a number or \"auto\"");
    return v.get<double>();
}

inline LigandSpec read_ligand(const json& node, const std::string& path,
                              const std::string& default_name, LigandRole role,
                              bool affinity_required) {
    expect_object(node, path);
    reject_unknown_keys(node, path, {"name", "affinity", "analgesic_potency"});
    LigandSpec ligand;
    ligand.role = role;
    ligand.name = read_string(node, path, "name", default_name);
    check_identifier(ligand.name, path + "/name");
    if (node.contains("affinity")) {
        const json& aff = node.at("affinity");
        expect_object(aff, path + "/affinity");
        for (const auto& [pop, value] : aff.items()) {
            check_identifier(pop, path + "/affinity/" + pop);
            if (!value.is_number())
                fail_schema(path + "/affinity/" + pop, "expected a number");
            ligand.affinity[pop] = value.get<double>();
        }
    } else if (affinity_required) {
        fail_schema(path, "missing required key 'affinity'");
    }
    ligand.analgesic_potency = read_double(node, path, "analgesic_potency", 0.0);
    return ligand;
}

inline RegionSpec read_region(const json& node, const std::string& path) {
    expect_object(node, path);
    reject_unknown_keys(node, path,
                        {"id", "receptors", "pain_responsive", "pain_intensity",
                         "secretion_per_intensity", "pixel_count"});
    if (!node.contains("id")) fail_schema(path, "missing required key 'id'");
    RegionSpec region;
    region.id = read_string(node, path, "id", "");
    check_identifier(region.id, path + "/id");
    if (!node.contains("receptors")) fail_schema(path, "missing required key 'receptors'");
    const json& receptors = node.at("receptors");
    expect_object(receptors, path + "/receptors");
    if (receptors.empty())
        fail_schema(path + "/receptors", "needs at least one receptor population");
    for (const auto& [pop, value] : receptors.items()) {
        check_identifier(pop, path + "/receptors/" + pop);
        if (!value.is_number_integer())
            fail_schema(path + "/receptors/" + pop, "expected an integer count");
        const long long count = value.get<long long>();
        if (count < 0) throw RangeError(path + "/receptors/" + pop + ": must be >= 0");
        region.receptor_count[pop] = count;
    }
    region.pain_responsive = read_bool(node, path, "pain_responsive", false);
    region.pain_intensity = read_double(node, path, "pain_intensity", 0.0);
    region.secretion_per_intensity = read_double(node, path, "secretion_per_intensity", 0.0);
    region.pixel_count = read_integer(node, path, "pixel_count", 64);
    return region;
}

inline json ligand_to_json(const LigandSpec& ligand) {
    json node = json::object();
    node["name"] = ligand.name;
    json aff = json::object();
    for (const auto& [pop, k] : ligand.affinity) aff[pop] = k;
    node["affinity"] = aff;
    node["analgesic_potency"] = ligand.analgesic_potency;
    return node;
}

} // namespace config_detail

// Parse and fully validate a config document. Unknown keys, type mismatches
// and version drift raise SchemaError; domain violations raise RangeError.
inline ExperimentConfig parse_config(const std::string& text) {
    namespace cd = config_detail;
    using nlohmann::json;

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("/: not valid JSON: ") + e.what());
    }
    cd::expect_object(doc, "/");
    cd::reject_unknown_keys(doc, "/",
                            {"schema_version", "subject", "ligands", "protocol", "bias",
                             "detector", "simulation", "analysis"});
    if (!doc.contains("schema_version"))
        cd::fail_schema("/", "missing required key 'schema_version'");
    if (!doc.at("schema_version").is_number_integer() ||
        doc.at("schema_version").get<long long>() != kConfigSchemaVersion)
        cd::fail_schema("/schema_version",
                        "unsupported version (expected " +
                            std::to_string(kConfigSchemaVersion) + ")");

    ExperimentConfig cfg;

    if (!doc.contains("subject")) cd::fail_schema("/", "missing required key 'subject'");
    const json& subject = doc.at("subject");
    cd::expect_object(subject, "/subject");
    cd::reject_unknown_keys(subject, "/subject", {"regions"});
    if (!subject.contains("regions"))
        cd::fail_schema("/subject", "missing required key 'regions'");
    const json& regions = subject.at("regions");
    if (!regions.is_array() || regions.empty())
        cd::fail_schema("/subject/regions", "expected a nonempty array");
    for (std::size_t i = 0; i < regions.size(); ++i)
        cfg.subject.regions.push_back(cd::read_region(
            regions.at(i), "/subject/regions/" + std::to_string(i)));

    if (!doc.contains("ligands")) cd::fail_schema("/", "missing required key 'ligands'");
    const json& ligands = doc.at("ligands");
    cd::expect_object(ligands, "/ligands");
    cd::reject_unknown_keys(ligands, "/ligands", {"agonist", "antagonist", "endogenous"});
    if (!ligands.contains("agonist"))
        cd::fail_schema("/ligands", "missing required key 'agonist'");
    if (!ligands.contains("antagonist"))
        cd::fail_schema("/ligands", "missing required key 'antagonist'");
    cfg.subject.agonist = cd::read_ligand(ligands.at("agonist"), "/ligands/agonist", "agonist",
                                          LigandRole::agonist, true);
    cfg.subject.antagonist = cd::read_ligand(ligands.at("antagonist"), "/ligands/antagonist",
                                             "antagonist", LigandRole::antagonist, true);
    if (ligands.contains("endogenous"))
        cfg.subject.endogenous = cd::read_ligand(ligands.at("endogenous"), "/ligands/endogenous",
                                                 "endogenous", LigandRole::agonist, false);
    else
        cfg.subject.endogenous.name = "endogenous";

    if (doc.contains("protocol")) {
        const json& protocol = doc.at("protocol");
        cd::expect_object(protocol, "/protocol");
        cd::reject_unknown_keys(protocol, "/protocol",
                                {"kind", "ratio", "threshold_dose", "analgesia_threshold",
                                 "subpharmacological_fraction", "scan_start_minutes",
                                 "scan_duration_minutes", "saturation_cap",
                                 "between_subject_cv"});
        const std::string kind = cd::read_string(protocol, "/protocol", "kind", "pet");
        if (kind == "pet")
            cfg.protocol.kind = ProtocolKind::pet;
        else if (kind == "autoradiography")
            cfg.protocol.kind = ProtocolKind::autoradiography;
        else
            cd::fail_schema("/protocol/kind", "expected \"pet\" or \"autoradiography\"");
        cfg.protocol.ratio_R = cd::read_auto_or_number(protocol, "/protocol", "ratio");
        cfg.protocol.threshold_dose =
            cd::read_auto_or_number(protocol, "/protocol", "threshold_dose");
        cfg.protocol.analgesia_threshold =
            cd::read_double(protocol, "/protocol", "analgesia_threshold", 1.0);
        cfg.protocol.subpharmacological_fraction =
            cd::read_double(protocol, "/protocol", "subpharmacological_fraction", 0.1);
        cfg.protocol.scan_start_minutes =
            cd::read_double(protocol, "/protocol", "scan_start_minutes", 30.0);
        cfg.protocol.scan_duration_minutes =
            cd::read_double(protocol, "/protocol", "scan_duration_minutes", 45.0);
        cfg.protocol.saturation_cap =
            cd::read_double(protocol, "/protocol", "saturation_cap", 0.10);
        cfg.protocol.between_subject_cv =
            cd::read_double(protocol, "/protocol", "between_subject_cv", 0.0);
    }

    if (doc.contains("bias")) {
        const json& bias = doc.at("bias");
        cd::expect_object(bias, "/bias");
        cd::reject_unknown_keys(bias, "/bias", {"lambda"});
        cfg.bias.lambda = cd::read_double(bias, "/bias", "lambda", 0.0);
    }

    if (doc.contains("detector")) {
        const json& detector = doc.at("detector");
        cd::expect_object(detector, "/detector");
        cd::reject_unknown_keys(detector, "/detector",
                                {"efficiency", "isotope_half_life_minutes",
                                 "nonspecific_background", "free_ligand_background",
                                 "counts_per_molecule_scale"});
        cfg.detector.efficiency = cd::read_double(detector, "/detector", "efficiency", 0.3);
        cfg.detector.isotope_half_life_minutes =
            cd::read_double(detector, "/detector", "isotope_half_life_minutes", 20.4);
        cfg.detector.nonspecific_background =
            cd::read_double(detector, "/detector", "nonspecific_background", 0.0);
        cfg.detector.free_ligand_background =
            cd::read_double(detector, "/detector", "free_ligand_background", 0.0);
        cfg.detector.counts_per_molecule_scale =
            cd::read_double(detector, "/detector", "counts_per_molecule_scale", 1.0);
    }

    if (doc.contains("simulation")) {
        const json& simulation = doc.at("simulation");
        cd::expect_object(simulation, "/simulation");
        cd::reject_unknown_keys(simulation, "/simulation", {"replicates", "master_seed"});
        cfg.simulation.replicates =
            cd::read_integer(simulation, "/simulation", "replicates", 100);
        if (simulation.contains("master_seed")) {
            const json& seed = simulation.at("master_seed");
            if (!seed.is_number_integer())
                cd::fail_schema("/simulation/master_seed", "expected an integer");
            if (!seed.is_number_unsigned() && seed.get<long long>() < 0)
                throw RangeError("/simulation/master_seed: must be >= 0");
            cfg.simulation.master_seed = seed.get<std::uint64_t>();
        }
    }

    if (doc.contains("analysis")) {
        const json& analysis = doc.at("analysis");
        cd::expect_object(analysis, "/analysis");
        cd::reject_unknown_keys(analysis, "/analysis",
                                {"alpha", "bonferroni", "lambda_grid", "size_grid",
                                 "background_grid", "size_axis", "power_replications"});
        cfg.analysis.alpha = cd::read_double(analysis, "/analysis", "alpha", 0.05);
        cfg.analysis.bonferroni = cd::read_bool(analysis, "/analysis", "bonferroni", false);
        auto read_grid = [&](const char* key, auto& target, auto convert) {
            if (!analysis.contains(key)) return;
            const nlohmann::json& arr = analysis.at(key);
            if (!arr.is_array() || arr.empty())
                cd::fail_schema(std::string("/analysis/") + key, "expected a nonempty array");
            target.clear();
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (!arr.at(i).is_number())
                    cd::fail_schema("/analysis/" + std::string(key) + "/" + std::to_string(i),
                                    "expected a number");
                target.push_back(convert(arr.at(i)));
            }
        };
        read_grid("lambda_grid", cfg.analysis.lambda_grid,
                  [](const nlohmann::json& v) { return v.get<double>(); });
        read_grid("size_grid", cfg.analysis.size_grid, [&](const nlohmann::json& v) {
            if (!v.is_number_integer())
                cd::fail_schema("/analysis/size_grid", "expected integer sizes");
            return v.get<long long>();
        });
        read_grid("background_grid", cfg.analysis.background_grid,
                  [](const nlohmann::json& v) { return v.get<double>(); });
        const std::string axis =
            cd::read_string(analysis, "/analysis", "size_axis", "replicates");
        if (axis == "replicates")
            cfg.analysis.size_axis = SizeAxis::replicates;
        else if (axis == "pixels")
            cfg.analysis.size_axis = SizeAxis::pixels;
        else
            cd::fail_schema("/analysis/size_axis", "expected \"replicates\" or \"pixels\"");
        cfg.analysis.power_replications =
            cd::read_integer(analysis, "/analysis", "power_replications", 200);
    }

    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

// Resolved document with every default materialized. Optional ratio and
// threshold dose keep their "auto" marker so serialization stays a faithful
// statement of the inputs rather than of one calibration outcome.
inline nlohmann::json resolved_json(const ExperimentConfig& cfg) {
    namespace cd = config_detail;
    using nlohmann::json;
    json doc = json::object();
    doc["schema_version"] = kConfigSchemaVersion;

    json regions = json::array();
    for (const RegionSpec& region : cfg.subject.regions) {
        json node = json::object();
        node["id"] = region.id;
        json receptors = json::object();
        for (const auto& [pop, count] : region.receptor_count) receptors[pop] = count;
        node["receptors"] = receptors;
        node["pain_responsive"] = region.pain_responsive;
        node["pain_intensity"] = region.pain_intensity;
        node["secretion_per_intensity"] = region.secretion_per_intensity;
        node["pixel_count"] = region.pixel_count;
        regions.push_back(node);
    }
    doc["subject"] = json::object();
    doc["subject"]["regions"] = regions;

    doc["ligands"] = json::object();
    doc["ligands"]["agonist"] = cd::ligand_to_json(cfg.subject.agonist);
    doc["ligands"]["antagonist"] = cd::ligand_to_json(cfg.subject.antagonist);
    doc["ligands"]["endogenous"] = cd::ligand_to_json(cfg.subject.endogenous);

    json protocol = json::object();
    protocol["kind"] = cfg.protocol.kind == ProtocolKind::pet ? "pet" : "autoradiography";
    if (cfg.protocol.ratio_R)
        protocol["ratio"] = *cfg.protocol.ratio_R;
    else
        protocol["ratio"] = "auto";
    if (cfg.protocol.threshold_dose)
        protocol["threshold_dose"] = *cfg.protocol.threshold_dose;
    else
        protocol["threshold_dose"] = "auto";
    protocol["analgesia_threshold"] = cfg.protocol.analgesia_threshold;
    protocol["subpharmacological_fraction"] = cfg.protocol.subpharmacological_fraction;
    protocol["scan_start_minutes"] = cfg.protocol.scan_start_minutes;
    protocol["scan_duration_minutes"] = cfg.protocol.scan_duration_minutes;
    protocol["saturation_cap"] = cfg.protocol.saturation_cap;
    protocol["between_subject_cv"] = cfg.protocol.between_subject_cv;
    doc["protocol"] = protocol;

    doc["bias"] = json::object();
    doc["bias"]["lambda"] = cfg.bias.lambda;

    json detector = json::object();
    detector["efficiency"] = cfg.detector.efficiency;
    detector["isotope_half_life_minutes"] = cfg.detector.isotope_half_life_minutes;
    detector["nonspecific_background"] = cfg.detector.nonspecific_background;
    detector["free_ligand_background"] = cfg.detector.free_ligand_background;
    detector["counts_per_molecule_scale"] = cfg.detector.counts_per_molecule_scale;
    doc["detector"] = detector;

    json simulation = json::object();
    simulation["replicates"] = cfg.simulation.replicates;
    simulation["master_seed"] = cfg.simulation.master_seed;
    doc["simulation"] = simulation;

    json analysis = json::object();
    analysis["alpha"] = cfg.analysis.alpha;
    analysis["bonferroni"] = cfg.analysis.bonferroni;
    analysis["lambda_grid"] = cfg.analysis.lambda_grid;
    analysis["size_grid"] = cfg.analysis.size_grid;
    analysis["background_grid"] = cfg.analysis.background_grid;
    analysis["size_axis"] =
        cfg.analysis.size_axis == SizeAxis::replicates ? "replicates" : "pixels";
    analysis["power_replications"] = cfg.analysis.power_replications;
    doc["analysis"] = analysis;

    return doc;
}

// Canonical text form: sorted keys, two-space indent, one trailing newline.
inline std::string serialize_config(const ExperimentConfig& cfg) {
    return resolved_json(cfg).dump(2) + "\n";
}

// Short stable fingerprint of the resolved config.
inline std::string config_digest(const ExperimentConfig& cfg) {
    const std::uint64_t h = fnv1a64(serialize_config(cfg));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace opetsim
