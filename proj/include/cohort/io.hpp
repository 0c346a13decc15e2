#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohort/demographics.hpp"
#include "cohort/experiments.hpp"
#include "cohort/simulator.hpp"

namespace cohort {

using json = nlohmann::ordered_json;

inline constexpr const char* kSitesSchemaVersion = "cohort-sites/1";
inline constexpr const char* kMarginalsSchemaVersion = "cohort-marginals/1";
inline constexpr const char* kSimulationSchemaVersion = "cohort-simulation/1";
inline constexpr const char* kAggregateSchemaVersion = "cohort-aggregate/1";
inline constexpr const char* kReportSchemaVersion = "cohort-report/1";

/// Seeds and manifest hash stamped into every output file.
struct Provenance {
    std::string manifest_hash;
    std::vector<std::uint64_t> seeds;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

// ---------------------------------------------------------------------------
// Schema, marginals, joints

inline json schema_to_json(const AttributeSchema& schema) {
    json attrs = json::array();
    for (const auto& a : schema.attributes()) attrs.push_back({{"name", a.name}, {"categories", a.categories}});
    return {{"attributes", attrs}};
}

inline AttributeSchema schema_from_json(const json& j) {
    std::vector<Attribute> attrs;
    for (const auto& a : j.at("attributes")) {
        attrs.push_back({a.at("name").get<std::string>(), a.at("categories").get<std::vector<std::string>>()});
    }
    return AttributeSchema(std::move(attrs));
}

inline json marginals_to_json(const AttributeSchema& schema, const MarginalSet& m) {
    json attrs = json::array();
    for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
        attrs.push_back({{"name", schema.attributes()[a].name},
                         {"categories", schema.attributes()[a].categories},
                         {"probs", m.per_attribute.at(a)}});
    }
    return {{"schema_version", kMarginalsSchemaVersion}, {"attributes", attrs}};
}

/// Reads labelled marginals, reordering categories into schema order.
inline MarginalSet marginals_from_json(const AttributeSchema& schema, const json& j) {
    MarginalSet m;
    m.per_attribute.assign(schema.attribute_count(), {});
    std::vector<bool> seen(schema.attribute_count(), false);
    for (const auto& entry : j.at("attributes")) {
        const auto a = schema.attribute_index(entry.at("name").get<std::string>());
        const auto cats = entry.at("categories").get<std::vector<std::string>>();
        const auto probs = entry.at("probs").get<std::vector<double>>();
        if (cats.size() != probs.size()) throw std::invalid_argument("category/prob length mismatch");
        std::vector<double> v(schema.category_count(a), 0.0);
        std::vector<bool> hit(v.size(), false);
        for (std::size_t k = 0; k < cats.size(); ++k) {
            const auto c = schema.category_index(a, cats[k]);
            v[c] = probs[k];
            hit[c] = true;
        }
        for (bool h : hit) {
            if (!h) throw std::invalid_argument("marginal for '" + entry.at("name").get<std::string>() + "' is incomplete");
        }
        m.per_attribute[a] = std::move(v);
        seen[a] = true;
    }
    for (std::size_t a = 0; a < seen.size(); ++a) {
        if (!seen[a]) throw std::invalid_argument("missing marginal for '" + schema.attributes()[a].name + "'");
    }
    m.validate(schema);
    return m;
}

inline json joint_to_json(const AttributeSchema& schema, const JointDistribution& j) {
    std::vector<std::string> labels;
    for (std::size_t c = 0; c < schema.cell_count(); ++c) labels.push_back(schema.cell_label(c));
    return {{"cells", labels}, {"probs", j.vector()}};
}

inline JointDistribution joint_from_json(const AttributeSchema& schema, const json& j) {
    const auto labels = j.at("cells").get<std::vector<std::string>>();
    const auto probs = j.at("probs").get<std::vector<double>>();
    if (labels.size() != schema.cell_count() || probs.size() != labels.size()) {
        throw std::invalid_argument("joint distribution does not match schema");
    }
    for (std::size_t c = 0; c < labels.size(); ++c) {
        if (labels[c] != schema.cell_label(c)) {
            throw std::invalid_argument("cell " + std::to_string(c) + " label '" + labels[c] + "' out of order");
        }
    }
    return JointDistribution(probs);
}

// ---------------------------------------------------------------------------
// Site bundle

struct SiteBundle {
    AttributeSchema schema;
    std::string target_name;
    JointDistribution target;
    std::vector<SiteModel> sites;
};

inline json bundle_to_json(const SiteBundle& b) {
    json sites = json::array();
    for (const auto& s : b.sites) {
        sites.push_back({{"name", s.name},
                         {"record_count", s.record_count},
                         {"marginals", marginals_to_json(b.schema, marginals_of_joint(b.schema, s.response))},
                         {"response", joint_to_json(b.schema, s.response)}});
    }
    return {{"schema_version", kSitesSchemaVersion},
            {"schema", schema_to_json(b.schema)},
            {"target", {{"name", b.target_name},
                        {"marginals", marginals_to_json(b.schema, marginals_of_joint(b.schema, b.target))},
                        {"distribution", joint_to_json(b.schema, b.target)}}},
            {"sites", sites}};
}

inline SiteBundle bundle_from_json(const json& j) {
    if (j.value("schema_version", std::string{}) != kSitesSchemaVersion) {
        throw std::invalid_argument("unsupported site bundle schema version");
    }
    SiteBundle b;
    b.schema = schema_from_json(j.at("schema"));
    b.target_name = j.at("target").value("name", std::string{"target"});
    b.target = joint_from_json(b.schema, j.at("target").at("distribution"));
    for (const auto& s : j.at("sites")) {
        SiteModel site;
        site.name = s.at("name").get<std::string>();
        site.record_count = s.value("record_count", 0.0);
        site.response = joint_from_json(b.schema, s.at("response"));
        b.sites.push_back(std::move(site));
    }
    return b;
}

// ---------------------------------------------------------------------------
// Simulation results

inline json config_to_json(const SimulationConfig& c) {
    json prior = {{"scheme", to_string(c.prior.scheme)}, {"samples_per_site", c.prior.samples_per_site}};
    prior["informed_mass"] = c.prior.informed_mass ? json(*c.prior.informed_mass) : json("records");
    return {{"cohort_size", c.cohort_size},
            {"iterations", c.iterations},
            {"batch", c.batch()},
            {"policy", to_string(c.policy.kind)},
            {"posterior_draws", c.policy.posterior_draws},
            {"solver", {{"max_iterations", c.policy.solver.max_iterations},
                        {"improvement_tolerance", c.policy.solver.improvement_tolerance},
                        {"gap_tolerance", c.policy.solver.gap_tolerance}}},
            {"prior", prior},
            {"metric", to_string(c.metric)},
            {"dynamics", {{"lambda", c.dynamics.shift}, {"kappa", c.dynamics.bias}}},
            {"log_base", c.log_base},
            {"seed", c.seed}};
}

inline json distances_to_json(const std::array<double, kMetricCount>& d) {
    json out = json::object();
    for (std::size_t m = 0; m < kMetricCount; ++m) out[std::string(to_string(kAllMetrics[m]))] = d[m];
    return out;
}

inline json result_to_json(const SimulationResult& r, const Provenance& prov) {
    json iters = json::array();
    for (const auto& it : r.iterations) {
        iters.push_back({{"t", it.t},
                         {"allocation", it.allocation.vector()},
                         {"recruits", it.recruits.counts},
                         {"site_counts", it.site_counts},
                         {"distances", distances_to_json(it.distances)},
                         {"objective", it.objective},
                         {"solver_converged", it.solver_converged}});
    }
    return {{"schema_version", kSimulationSchemaVersion},
            {"manifest_hash", prov.manifest_hash},
            {"seed", r.config.seed},
            {"distance_timing", "after recruitment"},
            {"config", config_to_json(r.config)},
            {"sites", r.site_names},
            {"iterations", iters},
            {"final_cohort", {{"total", r.cohort.total()},
                              {"counts", std::vector<std::int64_t>(r.cohort.counts().begin(), r.cohort.counts().end())}}},
            {"final_distances", distances_to_json(r.final_distances)}};
}

namespace detail {

inline std::string csv_preamble(const char* kind, const Provenance& prov) {
    std::string out = std::string("# schema: ") + kReportSchemaVersion + " " + kind + "\n";
    out += "# manifest: " + (prov.manifest_hash.empty() ? std::string("none") : prov.manifest_hash) + "\n";
    out += "# seeds:";
    if (prov.seeds.empty()) {
        out += " none";
    } else if (prov.seeds.size() == 1) {
        out += " " + std::to_string(prov.seeds.front());
    } else {
        out += " " + std::to_string(prov.seeds.front()) + ".." + std::to_string(prov.seeds.back());
    }
    return out + "\n";
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

/// One row per (iteration, site); distances are measured after the iteration.
inline std::string result_to_csv(const SimulationResult& r, const Provenance& prov) {
    std::string out = detail::csv_preamble("simulation", prov);
    out += "iteration,site,allocation,recruits,mkld,ukld,distance_summary\n";
    for (const auto& it : r.iterations) {
        for (std::size_t j = 0; j < r.site_names.size(); ++j) {
            out += std::to_string(it.t) + "," + detail::csv_escape(r.site_names[j]) + "," +
                   format_double(it.allocation[j]) + "," + std::to_string(it.recruits.counts[j]) + "," +
                   format_double(it.distances[0]) + "," + format_double(it.distances[1]) + "," +
                   format_double(it.distances[2]) + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregates

inline json interval_to_json(const CredibleInterval& ci) {
    return json::array({ci.lower, ci.mean, ci.upper});
}

inline CredibleInterval interval_from_json(const json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline json aggregate_to_json(const AggregateResult& a) {
    json series = json::object();
    json finals = json::object();
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        json s = json::array();
        for (const auto& ci : a.series[m]) s.push_back(interval_to_json(ci));
        series[std::string(to_string(kAllMetrics[m]))] = s;
        finals[std::string(to_string(kAllMetrics[m]))] = a.final_samples[m];
    }
    json out = {{"label", a.label},
                {"policy", to_string(a.policy)},
                {"prior", to_string(a.prior)},
                {"replicates", a.replicates},
                {"base_seed", a.base_seed},
                {"factor", a.factor ? json(*a.factor) : json(nullptr)},
                {"sites", a.site_names},
                {"series", series},
                {"mean_allocation", a.mean_allocation},
                {"mean_final_marginals", a.mean_final_marginals.per_attribute},
                {"final_samples", finals}};
    return out;
}

inline AggregateResult aggregate_from_json(const json& j) {
    AggregateResult a;
    a.label = j.at("label").get<std::string>();
    a.policy = parse_policy(j.at("policy").get<std::string>());
    a.prior = parse_prior(j.at("prior").get<std::string>());
    a.replicates = j.at("replicates").get<int>();
    a.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (!j.at("factor").is_null()) a.factor = j.at("factor").get<double>();
    a.site_names = j.at("sites").get<std::vector<std::string>>();
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        const std::string key(to_string(kAllMetrics[m]));
        for (const auto& ci : j.at("series").at(key)) a.series[m].push_back(interval_from_json(ci));
        a.final_samples[m] = j.at("final_samples").at(key).get<std::vector<double>>();
    }
    a.mean_allocation = j.at("mean_allocation").get<std::vector<std::vector<double>>>();
    a.mean_final_marginals.per_attribute = j.at("mean_final_marginals").get<std::vector<std::vector<double>>>();
    return a;
}

struct ReportBundle {
    AttributeSchema schema;
    JointDistribution target;
    std::vector<AggregateResult> battery;  // one per policy arm
    SweepAxis axis = SweepAxis::None;
    std::vector<AggregateResult> sweep;    // one per (arm, factor)
};

inline json report_to_json(const ReportBundle& r, const Provenance& prov) {
    json battery = json::array();
    for (const auto& a : r.battery) battery.push_back(aggregate_to_json(a));
    json sweep = json::array();
    for (const auto& a : r.sweep) sweep.push_back(aggregate_to_json(a));
    std::vector<std::uint64_t> seeds = prov.seeds;
    return {{"schema_version", kAggregateSchemaVersion},
            {"manifest_hash", prov.manifest_hash},
            {"seeds", seeds},
            {"axis", to_string(r.axis)},
            {"schema", schema_to_json(r.schema)},
            {"target", joint_to_json(r.schema, r.target)},
            {"battery", battery},
            {"sweep", sweep}};
}

inline ReportBundle report_from_json(const json& j) {
    if (j.value("schema_version", std::string{}) != kAggregateSchemaVersion) {
        throw std::invalid_argument("unsupported aggregate schema version");
    }
    ReportBundle r;
    r.axis = parse_sweep_axis(j.at("axis").get<std::string>());
    r.schema = schema_from_json(j.at("schema"));
    r.target = joint_from_json(r.schema, j.at("target"));
    for (const auto& a : j.at("battery")) r.battery.push_back(aggregate_from_json(a));
    for (const auto& a : j.at("sweep")) r.sweep.push_back(aggregate_from_json(a));
    return r;
}

/// Iteration series: label,policy,prior,metric,iteration,mean,lower,upper,replicates
inline std::string series_csv(std::span<const AggregateResult> results, const Provenance& prov) {
    std::string out = detail::csv_preamble("series", prov);
    out += "# distances measured after each iteration's recruitment\n";
    out += "label,policy,prior,metric,iteration,mean,lower,upper,replicates\n";
    for (const auto& a : results) {
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            for (std::size_t t = 0; t < a.series[m].size(); ++t) {
                const auto& ci = a.series[m][t];
                out += detail::csv_escape(a.label) + "," + std::string(to_string(a.policy)) + "," +
                       std::string(to_string(a.prior)) + "," + std::string(to_string(kAllMetrics[m])) + "," +
                       std::to_string(t + 1) + "," + format_double(ci.mean) + "," + format_double(ci.lower) + "," +
                       format_double(ci.upper) + "," + std::to_string(a.replicates) + "\n";
            }
        }
    }
    return out;
}

/// Mean allocation per iteration plus an AVG row, one block per arm.
inline std::string heatmap_csv(std::span<const AggregateResult> results, const Provenance& prov) {
    std::string out = detail::csv_preamble("heatmap", prov);
    if (results.empty()) return out;
    out += "label,row";
    for (const auto& s : results.front().site_names) out += "," + detail::csv_escape(s);
    out += "\n";
    for (const auto& a : results) {
        const std::size_t n = a.site_names.size();
        std::vector<double> avg(n, 0.0);
        for (std::size_t t = 0; t < a.mean_allocation.size(); ++t) {
            out += detail::csv_escape(a.label) + "," + std::to_string(t + 1);
            for (std::size_t j = 0; j < n; ++j) {
                out += "," + format_double(a.mean_allocation[t][j]);
                avg[j] += a.mean_allocation[t][j];
            }
            out += "\n";
        }
        out += detail::csv_escape(a.label) + ",AVG";
        for (double v : avg) out += "," + format_double(v / static_cast<double>(a.mean_allocation.size()));
        out += "\n";
    }
    return out;
}

/// Final-iteration distance per (arm, factor).
inline std::string sweep_csv(std::span<const AggregateResult> results, SweepAxis axis, const Provenance& prov) {
    if (results.empty()) throw std::invalid_argument("empty sweep");
    std::string out = detail::csv_preamble("sweep", prov);
    out += "label,policy,prior,axis,factor,metric,mean,lower,upper,replicates\n";
    for (const auto& a : results) {
        if (!a.factor) throw std::invalid_argument("sweep result without a factor value");
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            const auto& ci = a.series[m].back();
            out += detail::csv_escape(a.label) + "," + std::string(to_string(a.policy)) + "," +
                   std::string(to_string(a.prior)) + "," + std::string(to_string(axis)) + "," +
                   format_double(*a.factor) + "," + std::string(to_string(kAllMetrics[m])) + "," +
                   format_double(ci.mean) + "," + format_double(ci.lower) + "," + format_double(ci.upper) + "," +
                   std::to_string(a.replicates) + "\n";
        }
    }
    return out;
}

/// Mean final cohort share per subgroup against the target share.
inline std::string subgroups_csv(std::span<const AggregateResult> results, const AttributeSchema& schema,
                                 const JointDistribution& target, const Provenance& prov) {
    std::string out = detail::csv_preamble("subgroups", prov);
    out += "label,attribute,category,target,cohort\n";
    const auto tm = marginals_of_joint(schema, target);
    for (const auto& a : results) {
        for (std::size_t k = 0; k < schema.attribute_count(); ++k) {
            for (std::size_t c = 0; c < schema.category_count(k); ++c) {
                out += detail::csv_escape(a.label) + "," + schema.attributes()[k].name + "," +
                       detail::csv_escape(schema.attributes()[k].categories[c]) + "," +
                       format_double(tm.per_attribute[k][c]) + "," +
                       format_double(a.mean_final_marginals.per_attribute.at(k).at(c)) + "\n";
            }
        }
    }
    return out;
}

/// Parsed row of a series CSV.
struct SeriesRow {
    std::string label, policy, prior, metric;
    int iteration = 0;
    double mean = 0, lower = 0, upper = 0;
    int replicates = 0;
};

inline std::vector<SeriesRow> parse_series_csv(const std::string& text) {
    std::vector<SeriesRow> rows;
    std::istringstream in(text);
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto f = detail::split_csv_line(line);
        if (f.size() != 9) throw std::invalid_argument("series CSV row has " + std::to_string(f.size()) + " fields");
        rows.push_back({f[0], f[1], f[2], f[3], std::stoi(f[4]), std::stod(f[5]), std::stod(f[6]), std::stod(f[7]),
                        std::stoi(f[8])});
    }
    return rows;
}

struct ReportFiles {
    std::vector<std::filesystem::path> written;
};

/// Writes the report CSVs for whatever the bundle holds. A sweep axis
/// with no sweep results is an error.
inline ReportFiles export_report(const ReportBundle& report, const std::filesystem::path& dir,
                                 const Provenance& prov) {
    if (report.battery.empty() && report.sweep.empty()) throw std::invalid_argument("nothing to report");
    if (report.axis != SweepAxis::None && report.sweep.empty()) throw std::invalid_argument("empty sweep");
    ReportFiles files;
    auto emit = [&](const char* name, const std::string& content) {
        const auto path = dir / name;
        write_file(path, content);
        files.written.push_back(path);
    };
    if (!report.battery.empty()) {
        emit("series.csv", series_csv(report.battery, prov));
        emit("heatmap.csv", heatmap_csv(report.battery, prov));
        emit("subgroups.csv", subgroups_csv(report.battery, report.schema, report.target, prov));
    }
    if (!report.sweep.empty()) emit("sweep.csv", sweep_csv(report.sweep, report.axis, prov));
    return files;
}

}  // namespace cohort
