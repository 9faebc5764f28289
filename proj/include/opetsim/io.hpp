#pragma once

// File formats for the command-line tool. All writers are deterministic:
// map-ordered rows, shortest round-trip float formatting via to_chars, no
// timestamps, LF line endings. Undefined ratios serialize as an empty value
// cell plus a 0 in the matching *_defined column.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "opetsim/analysis.hpp"
#include "opetsim/errors.hpp"
#include "opetsim/scanner.hpp"

namespace opetsim {

inline std::string format_double(double value) {
    char buf[64];
    const auto result = std::to_chars(buf, buf + sizeof(buf), value);
    if (result.ec != std::errc())
        throw IoError("cannot format floating-point value");
    return std::string(buf, result.ptr);
}

inline double parse_double_field(const std::string& text) {
    double value = 0.0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc() || result.ptr != text.data() + text.size())
        throw IoError("malformed numeric field '" + text + "'");
    return value;
}

inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char ch : field) {
        if (ch == '"') quoted += '"';
        quoted += ch;
    }
    quoted += '"';
    return quoted;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                current += ch;
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current += ch;
        }
    }
    fields.push_back(current);
    return fields;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline const char* kResultsCsvHeader =
    "replicate,region,pain_responsive,"
    "threshold_counts_hot_agonist,threshold_counts_hot_antagonist,"
    "threshold_ratio,threshold_ratio_defined,"
    "subpharmacological_counts_hot_agonist,subpharmacological_counts_hot_antagonist,"
    "subpharmacological_ratio,subpharmacological_ratio_defined";

inline std::string results_to_csv(const std::vector<ExperimentResult>& results) {
    std::ostringstream out;
    out << kResultsCsvHeader << '\n';
    for (const ExperimentResult& r : results) {
        for (const auto& [region_id, outcome] : r.rois) {
            out << r.replicate << ',' << csv_quote(region_id) << ','
                << (outcome.pain_responsive ? 1 : 0);
            for (const RoiObservation* obs :
                 {&outcome.threshold, &outcome.subpharmacological}) {
                out << ',' << format_double(obs->counts_hot_agonist) << ','
                    << format_double(obs->counts_hot_antagonist) << ',';
                if (obs->ratio.defined) out << format_double(obs->ratio.value);
                out << ',' << (obs->ratio.defined ? 1 : 0);
            }
            out << '\n';
        }
    }
    return out.str();
}

inline std::vector<ExperimentResult> results_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kResultsCsvHeader)
        throw IoError("unexpected results header");
    std::map<std::uint64_t, ExperimentResult> by_replicate;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 11) throw IoError("results row needs 11 fields, got " +
                                          std::to_string(f.size()));
        const std::uint64_t replicate =
            static_cast<std::uint64_t>(std::stoull(f[0]));
        ExperimentResult& r = by_replicate[replicate];
        r.replicate = replicate;
        RoiOutcome outcome;
        outcome.pain_responsive = f[2] == "1";
        auto read_obs = [&](std::size_t base, RoiObservation& obs) {
            obs.counts_hot_agonist = parse_double_field(f[base]);
            obs.counts_hot_antagonist = parse_double_field(f[base + 1]);
            obs.ratio.defined = f[base + 3] == "1";
            if (obs.ratio.defined) obs.ratio.value = parse_double_field(f[base + 2]);
        };
        read_obs(3, outcome.threshold);
        read_obs(7, outcome.subpharmacological);
        r.rois[f[1]] = outcome;
    }
    std::vector<ExperimentResult> results;
    results.reserve(by_replicate.size());
    for (auto& [replicate, r] : by_replicate) results.push_back(std::move(r));
    return results;
}

inline const char* kPowerCsvHeader =
    "lambda,size,background,trials,tests,rejections,power,std_error,failed,message";

inline std::string power_surface_to_csv(const PowerSurface& surface) {
    std::ostringstream out;
    out << kPowerCsvHeader << '\n';
    for (const PowerPoint& cell : surface.cells) {
        out << format_double(cell.lambda) << ',' << cell.size << ','
            << format_double(cell.background) << ',' << cell.trials << ',' << cell.tests << ','
            << cell.rejections << ',' << format_double(cell.power) << ','
            << format_double(cell.std_error) << ',' << (cell.failed ? 1 : 0) << ','
            << csv_quote(cell.message) << '\n';
    }
    return out.str();
}

inline std::vector<PowerPoint> power_cells_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kPowerCsvHeader)
        throw IoError("unexpected power header");
    std::vector<PowerPoint> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 10)
            throw IoError("power row needs 10 fields, got " + std::to_string(f.size()));
        PowerPoint cell;
        cell.lambda = parse_double_field(f[0]);
        cell.size = std::stoll(f[1]);
        cell.background = parse_double_field(f[2]);
        cell.trials = std::stoll(f[3]);
        cell.tests = std::stoll(f[4]);
        cell.rejections = std::stoll(f[5]);
        cell.power = parse_double_field(f[6]);
        cell.std_error = parse_double_field(f[7]);
        cell.failed = f[8] == "1";
        cell.message = f[9];
        cells.push_back(std::move(cell));
    }
    return cells;
}

inline std::string calibration_to_csv(const ProtocolRunner& runner) {
    std::ostringstream out;
    out << "ratio,threshold_dose,subpharmacological_dose,dose_cap,analgesia_at_threshold,"
           "analgesia_threshold,saturation_cap\n";
    out << format_double(runner.ratio()) << ',' << format_double(runner.threshold_dose()) << ','
        << format_double(runner.subpharmacological_dose()) << ',';
    if (runner.calibration()) {
        out << format_double(runner.calibration()->dose_cap) << ','
            << format_double(runner.calibration()->analgesia_at_threshold);
    } else {
        out << ',';
    }
    out << ',' << format_double(runner.settings().analgesia_threshold) << ','
        << format_double(runner.settings().saturation_cap) << '\n';
    return out.str();
}

inline nlohmann::json hypothesis_report_to_json(const HypothesisReport& report,
                                                const std::string& digest) {
    nlohmann::json doc = nlohmann::json::object();
    doc["config_digest"] = digest;
    doc["alpha"] = report.alpha;
    doc["alpha_per_test"] = report.alpha_per_test;
    doc["bonferroni_applied"] = report.bonferroni_applied;
    doc["replicates"] = report.replicates;
    doc["excluded_pairs_total"] = report.excluded_pairs_total;
    nlohmann::json regions = nlohmann::json::array();
    for (const RoiHypothesis& h : report.rois) {
        nlohmann::json node = nlohmann::json::object();
        node["region"] = h.roi;
        node["pain_responsive"] = h.pain_responsive;
        node["one_sided"] = h.one_sided;
        node["n_pairs"] = h.n_pairs;
        node["n_excluded"] = h.n_excluded;
        node["n_ties"] = h.n_ties;
        node["n_used"] = h.n_used;
        node["positives"] = h.positives;
        node["median_difference"] = h.median_difference;
        node["p_value"] = h.p_value;
        node["reject"] = h.reject;
        regions.push_back(node);
    }
    doc["regions"] = regions;
    return doc;
}

struct DistributionRow {
    std::string region;
    std::string population;
    DoseClass dose_class = DoseClass::threshold;
    long long bound_agonist = 0;
    double baseline_weight = 0.0;
    double biased_weight = 0.0;
};

inline std::string distributions_to_csv(const std::vector<DistributionRow>& rows) {
    std::ostringstream out;
    out << "region,population,dose_class,bound_agonist,baseline_weight,biased_weight\n";
    for (const DistributionRow& row : rows) {
        out << csv_quote(row.region) << ',' << csv_quote(row.population) << ','
            << to_string(row.dose_class) << ',' << row.bound_agonist << ','
            << format_double(row.baseline_weight) << ',' << format_double(row.biased_weight)
            << '\n';
    }
    return out.str();
}

} // namespace opetsim
