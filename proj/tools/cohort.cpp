// Command-line front end: ingest, simulate, battery, sweep, report.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cohort/cli.hpp"

namespace {

void add_overrides(CLI::App* cmd, cohort::ManifestOverrides& o) {
    cmd->add_option("--seed", o.seed, "Override the run seed (and replicate base seed)");
    cmd->add_option("--policy", o.policy,
                    "random_site | uniform | informed_static | thompson | distributed_adaptive");
    cmd->add_option("--prior", o.prior, "uninformed | empiric | informed");
    cmd->add_option("--metric", o.metric, "mkld | ukld | distance_summary");
    cmd->add_option("--replicates", o.replicates, "Replicates per configuration");
    cmd->add_option("--jobs", o.jobs, "Worker threads for replicates");
    cmd->add_option("--lambda", o.shift, "Distribution shift factor");
    cmd->add_option("--kappa", o.bias, "Causal bias factor");
    cmd->add_option("--out", o.output_dir, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive multi-site recruitment simulator"};
    app.require_subcommand(1);

    cohort::cli::IngestOptions ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Build site and target distributions from ratio data");
    ingest_cmd->add_option("--ratios", ingest.ratio_table, "Site ratio CSV")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--census", ingest.census, "Census CSV (attribute,category,proportion)")
        ->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ingest.out, "Site bundle JSON to write")->required();

    std::string manifest_path;
    cohort::ManifestOverrides overrides;
    auto* simulate_cmd = app.add_subcommand("simulate", "Run one seeded simulation");
    auto* battery_cmd = app.add_subcommand("battery", "Run replicate batteries for every arm");
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep a dynamics factor");
    for (auto* cmd : {simulate_cmd, battery_cmd, sweep_cmd}) {
        cmd->add_option("manifest", manifest_path, "TOML run manifest")->required()->check(CLI::ExistingFile);
        add_overrides(cmd, overrides);
    }
    sweep_cmd->add_option("--axis", overrides.axis, "lambda | kappa");

    std::string report_input;
    std::string report_out = "report";
    auto* report_cmd = app.add_subcommand("report", "Write CSV reports from an aggregate JSON");
    report_cmd->add_option("input", report_input, "aggregate.json or sweep.json")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--out", report_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest_cmd->parsed()) {
            cohort::cli::cmd_ingest(ingest, std::cout);
        } else if (report_cmd->parsed()) {
            cohort::cli::cmd_report(report_input, report_out, std::cout);
        } else {
            const auto manifest = cohort::load_manifest(manifest_path, overrides);
            std::vector<std::filesystem::path> files;
            if (simulate_cmd->parsed()) files = cohort::cli::cmd_simulate(manifest, std::cout);
            if (battery_cmd->parsed()) files = cohort::cli::cmd_battery(manifest, std::cout);
            if (sweep_cmd->parsed()) files = cohort::cli::cmd_sweep(manifest, std::cout);
            for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
