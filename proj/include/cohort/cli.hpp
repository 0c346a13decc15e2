#pragma once

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cohort/experiments.hpp"
#include "cohort/io.hpp"
#include "cohort/manifest.hpp"
#include "cohort/metrics.hpp"

namespace cohort::cli {

struct IngestOptions {
    std::filesystem::path ratio_table;
    std::filesystem::path census;  // optional
    std::filesystem::path out;
};

/// Builds site joints and the target from CSV data and writes a site bundle.
inline void cmd_ingest(const IngestOptions& opt, std::ostream& log) {
    const auto& schema = default_schema();
    std::istringstream table_in(read_file(opt.ratio_table));
    auto table = parse_ratio_table(table_in, schema);
    if (!opt.census.empty()) {
        std::istringstream census_in(read_file(opt.census));
        table.census = parse_census_csv(census_in, schema);
    }
    auto data = build_sites(schema, table);
    const auto published = table.meta.find("mkld");
    log << std::left << std::setw(10) << "site" << std::setw(12) << "mkld";
    if (published != table.meta.end()) log << "published";
    log << "\n";
    for (std::size_t s = 0; s < data.sites.size(); ++s) {
        const double mkld = kl_divergence(data.sites[s].response.probs(), data.target.probs());
        log << std::setw(10) << data.sites[s].name << std::setw(12) << std::fixed << std::setprecision(4) << mkld;
        if (published != table.meta.end()) log << published->second[s];
        log << "\n";
    }
    log.unsetf(std::ios::fixed);
    SiteBundle bundle{schema, table.site_names.empty() ? "target" : "US Census", data.target, data.sites};
    write_file(opt.out, bundle_to_json(bundle).dump(2) + "\n");
    log << "wrote " << opt.out.string() << "\n";
}

inline SiteBundle load_manifest_data(const RunManifest& m) {
    return load_site_data(m.ratio_table, m.census, m.sites);
}

/// Single seeded run; writes simulation.json and simulation.csv.
inline std::vector<std::filesystem::path> cmd_simulate(const RunManifest& m, std::ostream& log) {
    const auto data = load_manifest_data(m);
    const auto result = run_simulation(m.base, data.schema, data.sites, data.target);
    const Provenance prov{m.hash, {m.base.seed}};
    const auto json_path = m.output_dir / "simulation.json";
    const auto csv_path = m.output_dir / "simulation.csv";
    write_file(json_path, result_to_json(result, prov).dump(2) + "\n");
    write_file(csv_path, result_to_csv(result, prov));
    // Validate what was written.
    const auto reread = json::parse(read_file(json_path));
    if (reread.at("iterations").size() != result.iterations.size()) {
        throw std::runtime_error("simulation output failed validation");
    }
    log << "policy " << to_string(m.base.policy.kind) << ", prior " << to_string(m.base.prior.scheme) << ", seed "
        << m.base.seed << ": final " << to_string(m.base.metric) << " = "
        << result.final_distances[AggregateResult::metric_slot(m.base.metric)] << "\n";
    return {json_path, csv_path};
}

inline std::vector<Arm> manifest_arms(const RunManifest& m) {
    if (!m.arms.empty()) return m.arms;
    const std::string label = std::string(to_string(m.base.policy.kind)) + "_" + std::string(to_string(m.base.prior.scheme));
    return {{label, m.base.policy.kind, m.base.prior.scheme}};
}

inline ExperimentSpec arm_spec(const RunManifest& m, const Arm& arm) {
    ExperimentSpec spec;
    spec.label = arm.label;
    spec.base = m.base;
    spec.base.policy.kind = arm.policy;
    spec.base.prior.scheme = arm.prior;
    spec.replicates = m.replicates;
    spec.base_seed = m.base_seed;
    spec.jobs = m.jobs;
    return spec;
}

inline Provenance manifest_provenance(const RunManifest& m) {
    Provenance prov{m.hash, {}};
    for (int i = 0; i < m.replicates; ++i) prov.seeds.push_back(m.base_seed + static_cast<std::uint64_t>(i));
    return prov;
}

inline std::vector<std::filesystem::path> write_report(const ReportBundle& report, const RunManifest& m,
                                                       const char* json_name) {
    const auto prov = manifest_provenance(m);
    const auto json_path = m.output_dir / json_name;
    write_file(json_path, report_to_json(report, prov).dump(2) + "\n");
    auto files = export_report(report, m.output_dir, prov).written;
    files.insert(files.begin(), json_path);
    return files;
}

/// Replicate battery over every arm; writes aggregate.json plus report CSVs.
inline std::vector<std::filesystem::path> cmd_battery(const RunManifest& m, std::ostream& log) {
    if (m.replicates < 2) throw std::invalid_argument("battery needs at least 2 replicates for credible intervals");
    const auto data = load_manifest_data(m);
    ReportBundle report;
    report.schema = data.schema;
    report.target = data.target;
    for (const auto& arm : manifest_arms(m)) {
        auto agg = run_replicates(arm_spec(m, arm), data.schema, data.sites, data.target);
        const auto& ci = agg.final_interval(m.base.metric);
        log << std::left << std::setw(34) << arm.label << " final " << to_string(m.base.metric) << " " << ci.mean
            << " [" << ci.lower << ", " << ci.upper << "]\n";
        report.battery.push_back(std::move(agg));
    }
    return write_report(report, m, "aggregate.json");
}

/// Dynamics sweep over every arm; writes sweep.json and sweep.csv.
inline std::vector<std::filesystem::path> cmd_sweep(const RunManifest& m, std::ostream& log) {
    if (m.axis == SweepAxis::None) throw std::invalid_argument("sweep needs sweep.axis = \"lambda\" or \"kappa\"");
    if (m.sweep_points.empty()) throw std::invalid_argument("empty sweep");
    if (m.replicates < 2) throw std::invalid_argument("sweep needs at least 2 replicates for credible intervals");
    const auto data = load_manifest_data(m);
    ReportBundle report;
    report.schema = data.schema;
    report.target = data.target;
    report.axis = m.axis;
    for (const auto& arm : manifest_arms(m)) {
        auto points = sweep(arm_spec(m, arm), m.axis, m.sweep_points, data.schema, data.sites, data.target);
        for (const auto& p : points) {
            log << std::left << std::setw(34) << arm.label << " " << to_string(m.axis) << "=" << *p.factor << " final "
                << p.final_interval(m.base.metric).mean << "\n";
        }
        report.sweep.insert(report.sweep.end(), points.begin(), points.end());
    }
    return write_report(report, m, "sweep.json");
}

/// Re-emits the CSV reports from a saved aggregate or sweep JSON.
inline std::vector<std::filesystem::path> cmd_report(const std::filesystem::path& input,
                                                     const std::filesystem::path& out_dir, std::ostream& log) {
    const auto j = json::parse(read_file(input));
    const auto report = report_from_json(j);
    Provenance prov{j.value("manifest_hash", std::string{}), j.value("seeds", std::vector<std::uint64_t>{})};
    auto files = export_report(report, out_dir, prov).written;
    for (const auto& f : files) log << "wrote " << f.string() << "\n";
    return files;
}

}  // namespace cohort::cli
