#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cohort/belief.hpp"
#include "cohort/dynamics.hpp"
#include "cohort/metrics.hpp"
#include "cohort/policy.hpp"
#include "cohort/random.hpp"
#include "cohort/schema.hpp"

namespace cohort {

struct PriorConfig {
    PriorScheme scheme = PriorScheme::Uninformed;
    std::int64_t samples_per_site = kDefaultPriorSamples;
    // Concentration mass of the fully informed prior. Unset: each site's
    // effective record count, so the prior is as strong as the data behind it.
    std::optional<double> informed_mass;

    friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

struct SimulationConfig {
    std::int64_t cohort_size = 10000;
    std::int64_t iterations = 20;
    PolicyConfig policy;
    PriorConfig prior;
    DistanceMetric metric = DistanceMetric::MultivariateKLD;
    DynamicsConfig dynamics;
    std::uint64_t seed = 0;
    double log_base = kDefaultLogBase;

    [[nodiscard]] std::int64_t batch() const { return cohort_size / iterations; }

    void validate() const {
        if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
        if (cohort_size < iterations || cohort_size % iterations != 0) {
            throw std::invalid_argument("cohort size " + std::to_string(cohort_size) +
                                        " is not a positive multiple of iterations " + std::to_string(iterations));
        }
        dynamics.validate();
        if (policy.posterior_draws < 1) throw std::invalid_argument("posterior_draws must be >= 1");
        if (prior.samples_per_site < 0) throw std::invalid_argument("samples_per_site must be >= 0");
        if (policy.kind == PolicyKind::InformedStatic && prior.samples_per_site < 1) {
            throw std::invalid_argument("informed static policy needs samples_per_site >= 1");
        }
    }
};

inline constexpr std::size_t kMetricCount = 3;
inline constexpr std::array<DistanceMetric, kMetricCount> kAllMetrics{
    DistanceMetric::MultivariateKLD, DistanceMetric::UnivariateKLDSum, DistanceMetric::DistanceSummary};

struct IterationRecord {
    std::int64_t t = 0;  // 1-based
    AllocationVector allocation;
    IntegerAllocation recruits;
    std::vector<std::vector<std::int64_t>> site_counts;  // [site][cell]
    std::array<double, kMetricCount> distances{};        // cohort vs target after this iteration
    double objective = 0.0;                              // policy's expected distance, 0 for belief-free policies
    bool solver_converged = true;

    friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct SimulationResult {
    SimulationConfig config;
    std::vector<std::string> site_names;
    std::vector<IterationRecord> iterations;
    CohortCounts cohort;
    std::array<double, kMetricCount> final_distances{};
    double prior_concentration_added = 0.0;  // pre-simulation sample mass
    double concentration_added = 0.0;        // belief mass gained during the run
};

/// Counts of r independent categorical recruits from one site.
inline std::vector<std::int64_t> recruit_batch(std::span<const double> response, std::int64_t r, Rng& rng) {
    return sample_multinomial(response, r, rng);
}

namespace detail {

inline DirichletBelief initial_belief(const SimulationConfig& config, std::span<const SiteModel> sites,
                                      std::size_t cells, Rng& prior_rng) {
    if (config.policy.kind == PolicyKind::InformedStatic) {
        return init_empiric(sites, config.prior.samples_per_site, prior_rng);
    }
    switch (config.prior.scheme) {
        case PriorScheme::Uninformed: return init_jeffreys(sites.size(), cells);
        case PriorScheme::Empiric: return init_empiric(sites, config.prior.samples_per_site, prior_rng);
        case PriorScheme::Informed: {
            if (config.prior.informed_mass) return init_informed(sites, *config.prior.informed_mass);
            std::vector<std::vector<double>> alpha;
            for (const auto& s : sites) {
                if (!(s.record_count > 0.0)) {
                    throw std::invalid_argument("site '" + s.name + "' has no record count; set an explicit informed prior mass");
                }
                auto a = s.response.vector();
                for (double& x : a) x = std::max(x * s.record_count, 1e-300);
                alpha.push_back(std::move(a));
            }
            return DirichletBelief(std::move(alpha));
        }
    }
    throw std::invalid_argument("unknown prior scheme");
}

}  // namespace detail

inline SimulationResult run_simulation(const SimulationConfig& config, const AttributeSchema& schema,
                                       std::vector<SiteModel> sites, const JointDistribution& target) {
    config.validate();
    if (sites.empty()) throw std::invalid_argument("no sites");
    if (target.size() != schema.cell_count()) throw std::invalid_argument("target does not match schema");
    for (auto& s : sites) {
        if (s.response.size() != schema.cell_count()) {
            throw std::invalid_argument("site '" + s.name + "' does not match the target schema");
        }
        s.dynamics = config.dynamics;
    }
    const std::size_t n = sites.size();
    const std::size_t cells = schema.cell_count();
    const std::int64_t batch = config.batch();

    Rng prior_rng = make_stream(config.seed, "prior");
    Rng policy_rng = make_stream(config.seed, "policy");
    Rng recruit_rng = make_stream(config.seed, "recruit");

    SimulationResult result;
    result.config = config;
    for (const auto& s : sites) result.site_names.push_back(s.name);
    result.cohort = CohortCounts(cells);

    DirichletBelief belief = detail::initial_belief(config, sites, cells, prior_rng);
    if (config.policy.kind == PolicyKind::InformedStatic || config.prior.scheme == PriorScheme::Empiric) {
        result.prior_concentration_added = static_cast<double>(config.prior.samples_per_site) * static_cast<double>(n);
    }
    const PolicyContext ctx{schema, target, config.metric, batch, config.log_base};
    std::optional<PolicyDecision> frozen;

    for (std::int64_t t = 1; t <= config.iterations; ++t) {
        PolicyDecision decision;
        switch (config.policy.kind) {
            case PolicyKind::RandomSite:
            case PolicyKind::Uniform:
                decision.allocation = naive_policy(config.policy.kind, n, policy_rng);
                break;
            case PolicyKind::InformedStatic:
                if (!frozen) {
                    frozen = distributed_adaptive_policy(ctx, belief, CohortCounts(cells), policy_rng,
                                                         config.policy.solver, config.policy.posterior_draws);
                }
                decision = *frozen;
                break;
            case PolicyKind::Thompson:
                decision = thompson_policy(ctx, belief, result.cohort, policy_rng, config.policy.posterior_draws);
                break;
            case PolicyKind::DistributedAdaptive:
                decision = distributed_adaptive_policy(ctx, belief, result.cohort, policy_rng, config.policy.solver,
                                                       config.policy.posterior_draws);
                break;
        }

        IterationRecord rec;
        rec.t = t;
        rec.allocation = decision.allocation;
        rec.objective = decision.objective;
        rec.solver_converged = decision.solver_converged;
        rec.recruits = round_allocation(decision.allocation, batch);
        rec.site_counts.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            rec.site_counts[j] = recruit_batch(sites[j].response.probs(), rec.recruits.counts[j], recruit_rng);
            result.cohort.add(rec.site_counts[j]);
            belief.update_with_counts(j, rec.site_counts[j]);
            result.concentration_added += static_cast<double>(rec.recruits.counts[j]);
        }
        const auto cohort_dist = result.cohort.distribution();
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            rec.distances[m] = evaluate(kAllMetrics[m], schema, cohort_dist, target, config.log_base);
        }
        for (std::size_t j = 0; j < n; ++j) sites[j] = step_dynamics(sites[j], decision.allocation[j]);
        result.iterations.push_back(std::move(rec));
    }
    result.final_distances = result.iterations.back().distances;
    return result;
}

struct ReplayReport {
    bool identical = true;
    std::optional<std::int64_t> first_divergent_iteration;
    std::string detail;

    explicit operator bool() const noexcept { return identical; }
};

/// Re-runs `config` and compares against `result` bit for bit.
inline ReplayReport replay_check(const SimulationResult& result, const SimulationConfig& config,
                                 const AttributeSchema& schema, const std::vector<SiteModel>& sites,
                                 const JointDistribution& target) {
    const auto again = run_simulation(config, schema, sites, target);
    ReplayReport report;
    const std::size_t common = std::min(again.iterations.size(), result.iterations.size());
    for (std::size_t k = 0; k < common; ++k) {
        if (!(again.iterations[k] == result.iterations[k])) {
            report.identical = false;
            report.first_divergent_iteration = again.iterations[k].t;
            report.detail = "iteration " + std::to_string(again.iterations[k].t) + " differs";
            return report;
        }
    }
    if (again.iterations.size() != result.iterations.size()) {
        report.identical = false;
        report.first_divergent_iteration = static_cast<std::int64_t>(common) + 1;
        report.detail = "iteration count differs";
    } else if (!(again.cohort == result.cohort)) {
        report.identical = false;
        report.detail = "final cohort differs";
    }
    return report;
}

}  // namespace cohort
