#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cohort/belief.hpp"
#include "cohort/demographics.hpp"
#include "cohort/metrics.hpp"
#include "cohort/random.hpp"
#include "cohort/schema.hpp"
#include "cohort/simplex_solver.hpp"

namespace cohort {

/// Resource fractions over sites; nonnegative, sums to one.
class AllocationVector {
public:
    AllocationVector() = default;

    explicit AllocationVector(std::vector<double> fractions) : rho_(std::move(fractions)) {
        detail::check_probability_vector(rho_, "allocation");
    }

    static AllocationVector one_hot(std::size_t n, std::size_t site) {
        std::vector<double> v(n, 0.0);
        v.at(site) = 1.0;
        return AllocationVector(std::move(v));
    }

    static AllocationVector uniform(std::size_t n) {
        return AllocationVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    [[nodiscard]] std::span<const double> fractions() const noexcept { return rho_; }
    [[nodiscard]] const std::vector<double>& vector() const noexcept { return rho_; }
    [[nodiscard]] std::size_t size() const noexcept { return rho_.size(); }
    [[nodiscard]] double operator[](std::size_t j) const { return rho_[j]; }

    friend bool operator==(const AllocationVector&, const AllocationVector&) = default;

private:
    std::vector<double> rho_;
};

/// Integer recruit counts per site that sum exactly to the batch size.
struct IntegerAllocation {
    std::vector<std::int64_t> counts;
    std::int64_t batch = 0;

    friend bool operator==(const IntegerAllocation&, const IntegerAllocation&) = default;
};

/// Largest-remainder apportionment of batch * rho; leftover units go to the
/// largest fractional parts, ties to the lower site index.
inline IntegerAllocation round_allocation(const AllocationVector& rho, std::int64_t batch) {
    if (batch < 0) throw std::invalid_argument("negative batch size");
    const std::size_t n = rho.size();
    IntegerAllocation out{std::vector<std::int64_t>(n, 0), batch};
    std::vector<double> remainder(n);
    std::int64_t assigned = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double quota = static_cast<double>(batch) * rho[j];
        const auto whole = static_cast<std::int64_t>(std::floor(quota));
        out.counts[j] = whole;
        remainder[j] = quota - static_cast<double>(whole);
        assigned += whole;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < batch; k = (k + 1) % n) {
        ++out.counts[order[k]];
        ++assigned;
    }
    while (assigned > batch) {
        // Only reachable if rounding pushed a floor above the quota sum.
        auto it = std::max_element(out.counts.begin(), out.counts.end());
        --*it;
        --assigned;
    }
    return out;
}

enum class PolicyKind { RandomSite, Uniform, InformedStatic, Thompson, DistributedAdaptive };

inline std::string_view to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::RandomSite: return "random_site";
        case PolicyKind::Uniform: return "uniform";
        case PolicyKind::InformedStatic: return "informed_static";
        case PolicyKind::Thompson: return "thompson";
        case PolicyKind::DistributedAdaptive: return "distributed_adaptive";
    }
    return "?";
}

inline PolicyKind parse_policy(std::string_view s) {
    if (s == "random_site" || s == "random") return PolicyKind::RandomSite;
    if (s == "uniform") return PolicyKind::Uniform;
    if (s == "informed_static" || s == "static") return PolicyKind::InformedStatic;
    if (s == "thompson") return PolicyKind::Thompson;
    if (s == "distributed_adaptive" || s == "adaptive") return PolicyKind::DistributedAdaptive;
    throw std::invalid_argument("unknown policy '" + std::string(s) + "'");
}

inline bool is_naive(PolicyKind k) {
    return k == PolicyKind::RandomSite || k == PolicyKind::Uniform || k == PolicyKind::InformedStatic;
}

struct PolicyConfig {
    PolicyKind kind = PolicyKind::DistributedAdaptive;
    SolverConfig solver;
    int posterior_draws = 1;  // draws averaged inside the expected distance
    std::int64_t static_prior_samples = kDefaultPriorSamples;
};

/// Per-site estimated response distributions, one matrix per posterior draw.
using SiteEstimates = std::vector<std::vector<double>>;

inline std::vector<SiteEstimates> draw_estimates(const DirichletBelief& belief, int draws, Rng& rng) {
    if (draws < 1) throw std::invalid_argument("need at least one posterior draw");
    std::vector<SiteEstimates> out(static_cast<std::size_t>(draws));
    for (auto& est : out) {
        est.reserve(belief.site_count());
        for (std::size_t j = 0; j < belief.site_count(); ++j) est.push_back(sample_estimate(belief, j, rng));
    }
    return out;
}

/// Cohort distribution expected after executing `rho` for one batch of `batch` recruits.
inline JointDistribution candidate_mix(const CohortCounts& cohort, const SiteEstimates& estimates,
                                       const AllocationVector& rho, std::int64_t batch) {
    if (batch < 1) throw std::invalid_argument("batch must be positive");
    if (estimates.size() != rho.size()) throw std::invalid_argument("allocation/site count mismatch");
    const double b = static_cast<double>(batch);
    std::vector<double> mix(cohort.size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = static_cast<double>(cohort.counts()[i]);
    for (std::size_t j = 0; j < estimates.size(); ++j) {
        if (estimates[j].size() != mix.size()) throw std::invalid_argument("estimate length mismatch");
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += b * rho[j] * estimates[j][i];
    }
    const double denom = static_cast<double>(cohort.total()) + b;
    for (double& x : mix) x /= denom;
    return JointDistribution::normalize(std::move(mix));
}

/// g(rho): distance of the expected post-batch cohort to the target, averaged
/// over posterior draws. Gradients are analytic for the KLD metrics and
/// finite-difference for the distance summary.
class MixtureObjective {
public:
    MixtureObjective(const AttributeSchema& schema, DistanceMetric metric, const JointDistribution& target,
                     const CohortCounts& cohort, std::vector<SiteEstimates> draws, std::int64_t batch,
                     double log_base = kDefaultLogBase, double fd_step = 1e-6)
        : schema_(&schema),
          metric_(metric),
          target_(target.vector()),
          draws_(std::move(draws)),
          log_base_(log_base),
          fd_step_(fd_step) {
        if (batch < 1) throw std::invalid_argument("batch must be positive");
        if (draws_.empty() || draws_.front().empty()) throw std::invalid_argument("no site estimates");
        const double denom = static_cast<double>(cohort.total() + batch);
        base_.resize(cohort.size());
        for (std::size_t i = 0; i < base_.size(); ++i) {
            base_[i] = static_cast<double>(cohort.counts()[i]) / denom;
        }
        weight_ = static_cast<double>(batch) / denom;
        for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
            target_marginals_.push_back(marginal_of(schema, target_, a));
        }
    }

    [[nodiscard]] std::size_t site_count() const noexcept { return draws_.front().size(); }

    [[nodiscard]] double value(std::span<const double> rho) const {
        double total = 0.0;
        for (const auto& est : draws_) total += distance(mixture(est, rho));
        return total / static_cast<double>(draws_.size());
    }

    [[nodiscard]] std::vector<double> gradient(std::span<const double> rho) const {
        if (metric_ == DistanceMetric::DistanceSummary) {
            return finite_difference_gradient([this](std::span<const double> x) { return value(x); }, rho,
                                              fd_step_);
        }
        const double inv_log = 1.0 / std::log(log_base_);
        std::vector<double> g(site_count(), 0.0);
        std::vector<double> cell_slope(base_.size());
        for (const auto& est : draws_) {
            const auto mix = mixture(est, rho);
            if (metric_ == DistanceMetric::MultivariateKLD) {
                for (std::size_t i = 0; i < mix.size(); ++i) {
                    cell_slope[i] = safe_log(mix[i]) - std::log(target_[i]) + 1.0;
                }
            } else {
                std::fill(cell_slope.begin(), cell_slope.end(), 0.0);
                for (std::size_t a = 0; a < schema_->attribute_count(); ++a) {
                    const auto m = marginal_of(*schema_, mix, a);
                    for (std::size_t i = 0; i < mix.size(); ++i) {
                        const auto c = schema_->category_of(i, a);
                        cell_slope[i] += safe_log(m[c]) - std::log(target_marginals_[a][c]) + 1.0;
                    }
                }
            }
            for (std::size_t j = 0; j < g.size(); ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < mix.size(); ++i) dot += est[j][i] * cell_slope[i];
                g[j] += weight_ * dot * inv_log;
            }
        }
        for (double& x : g) x /= static_cast<double>(draws_.size());
        return g;
    }

private:
    static double safe_log(double x) { return std::log(std::max(x, 1e-300)); }

    [[nodiscard]] std::vector<double> mixture(const SiteEstimates& est, std::span<const double> rho) const {
        std::vector<double> mix(base_);
        double mass = 0.0;
        for (std::size_t j = 0; j < est.size(); ++j) {
            const double w = weight_ * rho[j];
            mass += rho[j];
            for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += w * est[j][i];
        }
        // Off-simplex probes (finite differences) are renormalized so the
        // objective is the composition with rho / sum(rho).
        if (std::abs(mass - 1.0) > 1e-15) {
            double s = 0.0;
            for (double& x : mix) s += (x = std::max(x, 0.0));
            for (double& x : mix) x /= s;
        }
        return mix;
    }

    [[nodiscard]] double distance(const std::vector<double>& mix) const {
        return evaluate(metric_, *schema_, std::span<const double>(mix), std::span<const double>(target_),
                        log_base_);
    }

    const AttributeSchema* schema_;
    DistanceMetric metric_;
    std::vector<double> target_;
    std::vector<std::vector<double>> target_marginals_;
    std::vector<SiteEstimates> draws_;
    std::vector<double> base_;
    double weight_ = 0.0;
    double log_base_;
    double fd_step_;
};

struct PolicyDecision {
    AllocationVector allocation;
    double objective = 0.0;
    bool solver_converged = true;
    int solver_iterations = 0;
};

/// Lowest expected distance among one-hot allocations; ties go to the lowest index.
inline PolicyDecision thompson_from_estimates(const MixtureObjective& objective) {
    const std::size_t n = objective.site_count();
    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<double> rho(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(rho.begin(), rho.end(), 0.0);
        rho[j] = 1.0;
        const double v = objective.value(rho);
        if (v < best_value) {
            best_value = v;
            best = j;
        }
    }
    return {AllocationVector::one_hot(n, best), best_value, true, 0};
}

inline PolicyDecision adaptive_from_estimates(const MixtureObjective& objective, const SolverConfig& solver) {
    auto result = minimize_on_simplex(objective, objective.site_count(), solver);
    // Clean up exponentially small weights left by the multiplicative updates.
    double s = 0.0;
    for (double& x : result.x) s += (x = std::max(x, 0.0));
    for (double& x : result.x) x /= s;
    result.value = objective.value(result.x);
    // Vertex optima are only approached asymptotically by multiplicative updates.
    auto vertex = thompson_from_estimates(objective);
    if (vertex.objective < result.value) {
        vertex.solver_converged = result.converged;
        vertex.solver_iterations = result.iterations;
        return vertex;
    }
    return {AllocationVector(std::move(result.x)), result.value, result.converged, result.iterations};
}

struct PolicyContext {
    const AttributeSchema& schema;
    const JointDistribution& target;
    DistanceMetric metric = DistanceMetric::MultivariateKLD;
    std::int64_t batch = 500;
    double log_base = kDefaultLogBase;
};

inline PolicyDecision thompson_policy(const PolicyContext& ctx, const DirichletBelief& belief,
                                      const CohortCounts& cohort, Rng& rng, int posterior_draws = 1) {
    MixtureObjective objective(ctx.schema, ctx.metric, ctx.target, cohort,
                               draw_estimates(belief, posterior_draws, rng), ctx.batch, ctx.log_base);
    return thompson_from_estimates(objective);
}

inline PolicyDecision distributed_adaptive_policy(const PolicyContext& ctx, const DirichletBelief& belief,
                                                  const CohortCounts& cohort, Rng& rng,
                                                  const SolverConfig& solver = {}, int posterior_draws = 1) {
    MixtureObjective objective(ctx.schema, ctx.metric, ctx.target, cohort,
                               draw_estimates(belief, posterior_draws, rng), ctx.batch, ctx.log_base,
                               solver.finite_difference_step);
    return adaptive_from_estimates(objective, solver);
}

inline AllocationVector naive_policy(PolicyKind kind, std::size_t n_sites, Rng& rng) {
    if (n_sites < 1) throw std::invalid_argument("need at least one site");
    switch (kind) {
        case PolicyKind::Uniform: return AllocationVector::uniform(n_sites);
        case PolicyKind::RandomSite: {
            std::uniform_int_distribution<std::size_t> pick(0, n_sites - 1);
            return AllocationVector::one_hot(n_sites, pick(rng));
        }
        default: throw std::invalid_argument("not a belief-free policy: " + std::string(to_string(kind)));
    }
}

/// Optimizes once against an empiric prior and an empty cohort. The caller
/// freezes the result for every iteration.
inline PolicyDecision informed_static_policy(const PolicyContext& ctx, std::span<const SiteModel> sites,
                                             std::int64_t samples_per_site, Rng& prior_rng, Rng& policy_rng,
                                             const SolverConfig& solver = {}, int posterior_draws = 1) {
    if (samples_per_site < 1) throw std::invalid_argument("informed static policy needs prior samples");
    const auto belief = init_empiric(sites, samples_per_site, prior_rng);
    return distributed_adaptive_policy(ctx, belief, CohortCounts(ctx.target.size()), policy_rng, solver,
                                       posterior_draws);
}

}  // namespace cohort
