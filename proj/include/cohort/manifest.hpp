#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <toml.hpp>

#include "cohort/experiments.hpp"
#include "cohort/io.hpp"
#include "cohort/random.hpp"

namespace cohort {

/// One policy/prior combination in a battery.
struct Arm {
    std::string label;
    PolicyKind policy = PolicyKind::DistributedAdaptive;
    PriorScheme prior = PriorScheme::Uninformed;
};

struct RunManifest {
    std::filesystem::path ratio_table;  // Table-2 style CSV, or
    std::filesystem::path sites;        // a site bundle produced by `ingest`
    std::filesystem::path census;       // optional census override for ratio_table
    SimulationConfig base;
    int replicates = 100;
    std::uint64_t base_seed = 0;
    unsigned jobs = 1;
    std::vector<Arm> arms;
    SweepAxis axis = SweepAxis::None;
    std::vector<double> sweep_points;
    std::filesystem::path output_dir = "out";
    std::string hash;
};

/// Command-line values that take precedence over the manifest.
struct ManifestOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> policy;
    std::optional<std::string> prior;
    std::optional<std::string> metric;
    std::optional<int> replicates;
    std::optional<unsigned> jobs;
    std::optional<double> shift;
    std::optional<double> bias;
    std::optional<std::string> output_dir;
    std::optional<std::string> axis;

    [[nodiscard]] std::string canonical() const {
        std::ostringstream s;
        if (seed) s << "seed=" << *seed << ";";
        if (policy) s << "policy=" << *policy << ";";
        if (prior) s << "prior=" << *prior << ";";
        if (metric) s << "metric=" << *metric << ";";
        if (replicates) s << "replicates=" << *replicates << ";";
        if (shift) s << "lambda=" << format_double(*shift) << ";";
        if (bias) s << "kappa=" << format_double(*bias) << ";";
        if (axis) s << "axis=" << *axis << ";";
        return s.str();
    }
};

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// The five strategies under their natural priors.
inline std::vector<Arm> default_arms(PriorScheme adaptive_prior) {
    const std::string suffix = adaptive_prior == PriorScheme::Informed ? "informed" : "uninformed";
    return {{"random_site", PolicyKind::RandomSite, PriorScheme::Uninformed},
            {"uniform", PolicyKind::Uniform, PriorScheme::Uninformed},
            {"informed_static", PolicyKind::InformedStatic, PriorScheme::Empiric},
            {"thompson_" + suffix, PolicyKind::Thompson, adaptive_prior},
            {"distributed_adaptive_" + suffix, PolicyKind::DistributedAdaptive, adaptive_prior}};
}

namespace detail {

inline double log_base_from(const toml::node* node) {
    if (!node) return kDefaultLogBase;
    if (auto s = node->value<std::string>()) {
        if (*s == "e") return kDefaultLogBase;
        return std::stod(*s);
    }
    if (auto v = node->value<double>()) return *v;
    throw std::invalid_argument("log_base must be \"e\" or a number");
}

}  // namespace detail

/// Parses a TOML manifest. Relative paths are resolved against `base_dir`.
/// COHORT_SEED in the environment replaces the manifest seed; `overrides`
/// replace both.
inline RunManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                                  const ManifestOverrides& overrides = {}) {
    toml::table tbl;
    try {
        tbl = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "manifest: " << e.description() << " at line " << e.source().begin.line;
        throw std::invalid_argument(msg.str());
    }
    RunManifest m;
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        if (p.empty()) return {};
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    m.ratio_table = resolve(tbl["data"]["ratio_table"].value_or(std::string{}));
    m.sites = resolve(tbl["data"]["sites"].value_or(std::string{}));
    m.census = resolve(tbl["data"]["census"].value_or(std::string{}));
    if (m.ratio_table.empty() == m.sites.empty()) {
        throw std::invalid_argument("manifest: set exactly one of data.ratio_table or data.sites");
    }

    auto& cfg = m.base;
    const auto sim = tbl["simulation"];
    cfg.cohort_size = sim["cohort_size"].value_or(cfg.cohort_size);
    cfg.iterations = sim["iterations"].value_or(cfg.iterations);
    cfg.policy.kind = parse_policy(sim["policy"].value_or(std::string(to_string(cfg.policy.kind))));
    cfg.prior.scheme = parse_prior(sim["prior"].value_or(std::string(to_string(cfg.prior.scheme))));
    cfg.metric = parse_metric(sim["metric"].value_or(std::string(to_string(cfg.metric))));
    cfg.seed = static_cast<std::uint64_t>(sim["seed"].value_or(std::int64_t{0}));
    cfg.prior.samples_per_site = sim["samples_per_site"].value_or(cfg.prior.samples_per_site);
    cfg.policy.posterior_draws = sim["posterior_draws"].value_or(cfg.policy.posterior_draws);
    if (const auto* mass = sim["informed_mass"].node()) {
        if (auto s = mass->value<std::string>(); s && *s == "records") {
            cfg.prior.informed_mass.reset();
        } else if (auto v = mass->value<double>()) {
            cfg.prior.informed_mass = *v;
        } else {
            throw std::invalid_argument("manifest: informed_mass must be \"records\" or a number");
        }
    }
    cfg.log_base = detail::log_base_from(sim["log_base"].node());
    cfg.dynamics.shift = tbl["dynamics"]["lambda"].value_or(1.0);
    cfg.dynamics.bias = tbl["dynamics"]["kappa"].value_or(1.0);
    const auto solver = tbl["solver"];
    cfg.policy.solver.max_iterations = solver["max_iterations"].value_or(cfg.policy.solver.max_iterations);
    cfg.policy.solver.improvement_tolerance =
        solver["improvement_tolerance"].value_or(cfg.policy.solver.improvement_tolerance);
    cfg.policy.solver.gap_tolerance = solver["gap_tolerance"].value_or(cfg.policy.solver.gap_tolerance);

    const auto exp = tbl["experiment"];
    m.replicates = exp["replicates"].value_or(m.replicates);
    m.base_seed = static_cast<std::uint64_t>(exp["base_seed"].value_or(std::int64_t{0}));
    m.jobs = static_cast<unsigned>(exp["jobs"].value_or(std::int64_t{1}));
    if (const auto* arms = exp["arms"].as_array()) {
        for (const auto& node : *arms) {
            const auto* t = node.as_table();
            if (!t) throw std::invalid_argument("manifest: experiment.arms entries must be tables");
            Arm arm;
            arm.policy = parse_policy((*t)["policy"].value_or(std::string{"distributed_adaptive"}));
            arm.prior = parse_prior((*t)["prior"].value_or(std::string{"uninformed"}));
            arm.label = (*t)["label"].value_or(std::string(to_string(arm.policy)) + "_" +
                                               std::string(to_string(arm.prior)));
            m.arms.push_back(std::move(arm));
        }
    } else if (auto preset = exp["arms"].value<std::string>()) {
        if (*preset == "all_uninformed") {
            m.arms = default_arms(PriorScheme::Uninformed);
        } else if (*preset == "all_informed") {
            m.arms = default_arms(PriorScheme::Informed);
        } else {
            throw std::invalid_argument("manifest: unknown arms preset '" + *preset + "'");
        }
    }

    const auto sw = tbl["sweep"];
    m.axis = parse_sweep_axis(sw["axis"].value_or(std::string{"none"}));
    const auto* explicit_points = sw["points"].as_array();
    if (explicit_points) {
        for (const auto& p : *explicit_points) m.sweep_points.push_back(p.value_or(0.0));
    }
    m.output_dir = resolve(tbl["output"]["dir"].value_or(std::string{"out"}));

    if (const char* env = std::getenv("COHORT_SEED"); env && *env) {
        try {
            cfg.seed = std::stoull(env);
            m.base_seed = cfg.seed;
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string("COHORT_SEED is not an integer: ") + env);
        }
    }
    if (overrides.seed) cfg.seed = m.base_seed = *overrides.seed;
    if (overrides.policy) cfg.policy.kind = parse_policy(*overrides.policy);
    if (overrides.prior) cfg.prior.scheme = parse_prior(*overrides.prior);
    if (overrides.metric) cfg.metric = parse_metric(*overrides.metric);
    if (overrides.replicates) m.replicates = *overrides.replicates;
    if (overrides.jobs) m.jobs = *overrides.jobs;
    if (overrides.shift) cfg.dynamics.shift = *overrides.shift;
    if (overrides.bias) cfg.dynamics.bias = *overrides.bias;
    if (overrides.output_dir) m.output_dir = *overrides.output_dir;
    if (overrides.axis) m.axis = parse_sweep_axis(*overrides.axis);
    if (overrides.policy || overrides.prior) m.arms.clear();
    if (!explicit_points && m.axis != SweepAxis::None) {
        const bool shift = m.axis == SweepAxis::Shift;
        m.sweep_points = sweep_grid(sw["start"].value_or(shift ? 0.8 : 0.7), sw["stop"].value_or(1.4),
                                    sw["step"].value_or(0.05));
    }

    cfg.validate();
    std::string effective_seed = std::to_string(cfg.seed) + "/" + std::to_string(m.base_seed);
    m.hash = hex64(detail::fnv1a(text + "\n#overrides:" + overrides.canonical() + "#seed:" + effective_seed));
    return m;
}

inline RunManifest load_manifest(const std::filesystem::path& path, const ManifestOverrides& overrides = {}) {
    return parse_manifest(read_file(path), path.parent_path(), overrides);
}

inline MarginalSet parse_census_csv(std::istream& in, const AttributeSchema& schema) {
    MarginalSet m;
    for (std::size_t a = 0; a < schema.attribute_count(); ++a) m.per_attribute.emplace_back(schema.category_count(a), -1.0);
    std::string line;
    std::size_t row = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line.front() == '#') continue;
        const auto f = detail::split_csv_line(line);
        if (!header) {
            if (f.size() != 3 || f[0] != "attribute" || f[1] != "category") {
                throw std::invalid_argument("census row " + std::to_string(row) +
                                            ": expected header 'attribute,category,proportion'");
            }
            header = true;
            continue;
        }
        if (f.size() != 3) throw std::invalid_argument("census row " + std::to_string(row) + ": expected 3 columns");
        try {
            const auto a = schema.attribute_index(f[0]);
            m.per_attribute[a][schema.category_index(a, f[1])] = detail::parse_number(f[2], row, 3);
        } catch (const std::out_of_range& e) {
            throw std::invalid_argument("census row " + std::to_string(row) + ": " + e.what());
        }
    }
    for (std::size_t a = 0; a < m.per_attribute.size(); ++a) {
        for (double& v : m.per_attribute[a]) {
            if (v < 0.0) throw std::invalid_argument("census is missing a category of '" + schema.attributes()[a].name + "'");
        }
        m.per_attribute[a] = detail::normalized(std::move(m.per_attribute[a]), "census marginal");
    }
    return m;
}

/// Loads sites and target from a ratio table (optionally with a census
/// override) or from a site bundle.
inline SiteBundle load_site_data(const std::filesystem::path& ratio_table, const std::filesystem::path& census,
                                 const std::filesystem::path& bundle) {
    if (!bundle.empty()) return bundle_from_json(json::parse(read_file(bundle)));
    const auto& schema = default_schema();
    std::istringstream table_in(read_file(ratio_table));
    auto table = parse_ratio_table(table_in, schema);
    if (!census.empty()) {
        std::istringstream census_in(read_file(census));
        table.census = parse_census_csv(census_in, schema);
    }
    auto data = build_sites(schema, table);
    return {schema, "US Census", std::move(data.target), std::move(data.sites)};
}

}  // namespace cohort
