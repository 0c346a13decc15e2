#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cohort/policy.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cohort;
using testing_support::flat_schema;
using testing_support::star_sites;

namespace {

/// Independent evaluation of the MKLD mixture objective.
double mixture_kl_oracle(const std::vector<double>& cohort_counts, const SiteEstimates& est,
                         const std::vector<double>& rho, double batch, const std::vector<double>& target) {
    double total = 0;
    for (double c : cohort_counts) total += c;
    std::vector<double> mix(target.size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
        mix[i] = cohort_counts[i];
        for (std::size_t j = 0; j < est.size(); ++j) mix[i] += batch * rho[j] * est[j][i];
        mix[i] /= total + batch;
    }
    return oracle::kl(mix, target);
}

std::vector<double> random_dist(std::mt19937_64& gen, std::size_t k, double floor = 0.02) {
    std::gamma_distribution<double> g(1.0);
    std::vector<double> v(k);
    double s = 0;
    for (double& x : v) s += (x = g(gen) + floor);
    for (double& x : v) x /= s;
    return v;
}

DirichletBelief concentrated(const std::vector<std::vector<double>>& responses) {
    std::vector<std::vector<double>> alpha;
    for (const auto& r : responses) {
        std::vector<double> a(r);
        for (double& x : a) x = std::max(x * 1e12, 1e-3);
        alpha.push_back(a);
    }
    return DirichletBelief(alpha);
}

}  // namespace

TEST(AllocationVector, ValidatesSimplex) {
    EXPECT_THROW(AllocationVector({0.5, 0.6}), std::invalid_argument);
    EXPECT_THROW(AllocationVector({1.5, -0.5}), std::invalid_argument);
    const auto u = AllocationVector::uniform(9);
    for (std::size_t j = 0; j < 9; ++j) EXPECT_DOUBLE_EQ(u[j], 1.0 / 9.0);
    const auto h = AllocationVector::one_hot(3, 2);
    EXPECT_EQ(h[2], 1.0);
    EXPECT_EQ(h[0], 0.0);
}

TEST(PolicyKind, NamesRoundTrip) {
    for (auto k : {PolicyKind::RandomSite, PolicyKind::Uniform, PolicyKind::InformedStatic, PolicyKind::Thompson,
                   PolicyKind::DistributedAdaptive}) {
        EXPECT_EQ(parse_policy(to_string(k)), k);
    }
    EXPECT_TRUE(is_naive(PolicyKind::Uniform));
    EXPECT_FALSE(is_naive(PolicyKind::Thompson));
    EXPECT_THROW(parse_policy("greedy"), std::invalid_argument);
}

TEST(CandidateMix, Examples) {
    const SiteEstimates est{{0.2, 0.8}, {0.6, 0.4}};
    const auto a = candidate_mix(CohortCounts(2), est, AllocationVector::one_hot(2, 1), 500);
    EXPECT_DOUBLE_EQ(a[0], 0.6);
    const SiteEstimates same{{0.3, 0.7}, {0.3, 0.7}};
    const auto b = candidate_mix(CohortCounts(2), same, AllocationVector::uniform(2), 500);
    EXPECT_NEAR(b[0], 0.3, 1e-15);
    CohortCounts c(2);
    const std::vector<std::int64_t> q{100, 400};  // q = [0.2, 0.8]
    c.add(q);
    const auto m = candidate_mix(c, est, AllocationVector::one_hot(2, 1), 500);
    EXPECT_NEAR(m[0], (0.2 + 0.6) / 2, 1e-15);
    EXPECT_THROW(candidate_mix(c, est, AllocationVector::one_hot(2, 1), 0), std::invalid_argument);
}

TEST(Thompson, SiteEqualToTargetWins) {
    const auto s = flat_schema(2);
    const JointDistribution target({0.5, 0.5});
    const PolicyContext ctx{s, target};
    Rng rng(1);
    const auto d = thompson_policy(ctx, concentrated({{0.9, 0.1}, {0.5, 0.5}}), CohortCounts(2), rng);
    EXPECT_EQ(d.allocation[1], 1.0);
    const auto first = thompson_policy(ctx, concentrated({{0.5, 0.5}, {0.9, 0.1}}), CohortCounts(2), rng);
    EXPECT_EQ(first.allocation[0], 1.0);
}

TEST(Thompson, IdenticalSitesTieToFirst) {
    const auto s = flat_schema(2);
    const JointDistribution target({0.5, 0.5});
    const SiteEstimates est{{0.7, 0.3}, {0.7, 0.3}, {0.7, 0.3}};
    const MixtureObjective obj(s, DistanceMetric::MultivariateKLD, target, CohortCounts(2), {est}, 500);
    EXPECT_EQ(thompson_from_estimates(obj).allocation[0], 1.0);
}

TEST(Thompson, PicksSmallestOfThreeDistances) {
    const auto s = flat_schema(2);
    const std::vector<double> target{0.5, 0.5};
    const SiteEstimates est{{0.866, 0.134}, {0.72, 0.28}, {0.805, 0.195}};
    const std::vector<double> expected{0.3, 0.1, 0.2};
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(oracle::kl(est[j], target), expected[j], 0.005);
    const MixtureObjective obj(s, DistanceMetric::MultivariateKLD, JointDistribution(target), CohortCounts(2), {est},
                               500);
    const auto d = thompson_from_estimates(obj);
    EXPECT_EQ(d.allocation[1], 1.0);
    EXPECT_NEAR(d.objective, oracle::kl(est[1], target), 1e-12);
}

TEST(Adaptive, OppositeSitesSplitEvenly) {
    const auto s = flat_schema(2);
    const std::vector<double> target{0.5, 0.5};
    const SiteEstimates est{{1.0, 0.0}, {0.0, 1.0}};
    const MixtureObjective obj(s, DistanceMetric::MultivariateKLD, JointDistribution(target), CohortCounts(2), {est},
                               500);
    const auto grid = oracle::simplex_grid_min(2, 0.001, [&](const std::vector<double>& rho) {
        return mixture_kl_oracle({0, 0}, est, rho, 500, target);
    });
    EXPECT_NEAR(grid.x[0], 0.5, 1e-12);
    const auto d = adaptive_from_estimates(obj, {});
    EXPECT_NEAR(d.allocation[0], 0.5, 1e-6);
    EXPECT_NEAR(d.objective, 0.0, 1e-12);
    EXPECT_TRUE(d.solver_converged);
}

TEST(Adaptive, SiteEqualToTargetGetsEverything) {
    const auto s = flat_schema(3);
    const std::vector<double> target{0.2, 0.3, 0.5};
    const SiteEstimates est{{0.6, 0.2, 0.2}, {0.2, 0.3, 0.5}, {0.1, 0.1, 0.8}};
    const MixtureObjective obj(s, DistanceMetric::MultivariateKLD, JointDistribution(target), CohortCounts(3), {est},
                               500);
    const auto d = adaptive_from_estimates(obj, {});
    EXPECT_EQ(d.allocation[1], 1.0);
    EXPECT_EQ(d.objective, 0.0);
}

TEST(Adaptive, IdenticalSitesStayUniform) {
    const auto s = flat_schema(3);
    const SiteEstimates est(4, {0.6, 0.3, 0.1});
    const MixtureObjective obj(s, DistanceMetric::MultivariateKLD, JointDistribution({0.2, 0.3, 0.5}),
                               CohortCounts(3), {est}, 500);
    const auto d = adaptive_from_estimates(obj, {});
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(d.allocation[j], 0.25);
}

TEST(Adaptive, MatchesGridOnSmallConvexProblems) {
    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + trial % 2;
        const std::size_t k = 3 + trial % 4;
        const auto s = flat_schema(k);
        const auto target = random_dist(gen, k);
        SiteEstimates est;
        for (std::size_t j = 0; j < n; ++j) est.push_back(random_dist(gen, k, 0.0));
        std::vector<double> counts(k, 0.0);
        CohortCounts cohort(k);
        if (trial % 3 != 0) {
            std::vector<std::int64_t> c(k);
            for (std::size_t i = 0; i < k; ++i) counts[i] = static_cast<double>(c[i] = static_cast<std::int64_t>(gen() % 300));
            cohort.add(c);
        }
        const MixtureObjective obj(s, DistanceMetric::MultivariateKLD, JointDistribution(target), cohort, {est}, 500);
        const auto grid = oracle::simplex_grid_min(n, 0.01, [&](const std::vector<double>& rho) {
            return mixture_kl_oracle(counts, est, rho, 500, target);
        });
        const auto d = adaptive_from_estimates(obj, {});
        EXPECT_NEAR(d.objective, grid.value, 1e-3) << "trial " << trial;
        EXPECT_LE(d.objective, grid.value + 1e-9) << "trial " << trial;
        EXPECT_NEAR(d.objective, mixture_kl_oracle(counts, est, d.allocation.vector(), 500, target), 1e-10);
    }
}

TEST(Adaptive, NeverWorseThanAnyOneHot) {
    const auto& data = star_sites();
    const auto& schema = default_schema();
    Rng rng(77);
    for (auto metric : {DistanceMetric::MultivariateKLD, DistanceMetric::UnivariateKLDSum, DistanceMetric::DistanceSummary}) {
        for (int trial = 0; trial < 8; ++trial) {
            auto belief = init_jeffreys(9, 80);
            CohortCounts cohort(80);
            for (int t = 0; t < trial; ++t) {
                for (std::size_t j = 0; j < 9; ++j) {
                    const auto c = sample_multinomial(data.sites[j].response.probs(), 60, rng);
                    belief.update_with_counts(j, c);
                    cohort.add(c);
                }
            }
            const MixtureObjective obj(schema, metric, data.target, cohort, draw_estimates(belief, 1, rng), 500);
            const auto d = adaptive_from_estimates(obj, {});
            EXPECT_NEAR(d.objective, obj.value(d.allocation.vector()), 1e-15);
            std::vector<double> rho(9);
            for (std::size_t j = 0; j < 9; ++j) {
                std::fill(rho.begin(), rho.end(), 0.0);
                rho[j] = 1.0;
                EXPECT_LE(d.objective, obj.value(rho)) << to_string(metric) << " site " << j;
            }
            double s = 0;
            for (std::size_t j = 0; j < 9; ++j) {
                EXPECT_GE(d.allocation[j], 0.0);
                s += d.allocation[j];
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Adaptive, ArgminInvariantUnderMetricScaling) {
    const auto& data = star_sites();
    const auto& schema = default_schema();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto draws = draw_estimates(init_jeffreys(9, 80), 1, rng);
        const MixtureObjective nats(schema, DistanceMetric::MultivariateKLD, data.target, CohortCounts(80), draws, 500);
        const MixtureObjective bits(schema, DistanceMetric::MultivariateKLD, data.target, CohortCounts(80), draws, 500,
                                    2.0);
        const auto tn = thompson_from_estimates(nats), tb = thompson_from_estimates(bits);
        EXPECT_EQ(tn.allocation.vector(), tb.allocation.vector());
        EXPECT_NEAR(tb.objective * std::log(2.0), tn.objective, 1e-12);
        const auto an = adaptive_from_estimates(nats, {}), ab = adaptive_from_estimates(bits, {});
        for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(an.allocation[j], ab.allocation[j], 2e-3);
        EXPECT_NEAR(ab.objective * std::log(2.0), an.objective, 1e-6);
    }
}

TEST(Adaptive, AnalyticGradientMatchesFiniteDifferences) {
    const auto& data = star_sites();
    const auto& schema = default_schema();
    Rng rng(4);
    for (auto metric : {DistanceMetric::MultivariateKLD, DistanceMetric::UnivariateKLDSum}) {
        const MixtureObjective obj(schema, metric, data.target, CohortCounts(80), draw_estimates(init_jeffreys(9, 80), 2, rng),
                                   500);
        const auto x = AllocationVector::uniform(9).vector();
        const auto g = obj.gradient(x);
        const auto fd = finite_difference_gradient([&](std::span<const double> p) { return obj.value(p); },
                                                   std::span<const double>(x), 1e-6);
        // Directional derivatives along simplex edges must agree; the raw
        // components differ by a constant because off-simplex probes are renormalized.
        for (std::size_t j = 1; j < 9; ++j) EXPECT_NEAR(g[j] - g[0], fd[j] - fd[0], 1e-5);
    }
}

TEST(Solver, ReportsNonConvergenceWithBestIterate) {
    const auto& data = star_sites();
    Rng rng(2);
    const MixtureObjective obj(default_schema(), DistanceMetric::MultivariateKLD, data.target, CohortCounts(80),
                               draw_estimates(init_jeffreys(9, 80), 1, rng), 500);
    SolverConfig cfg;
    cfg.max_iterations = 1;
    cfg.improvement_tolerance = 0.0;
    cfg.gap_tolerance = 0.0;
    const auto soft = minimize_on_simplex(obj, 9, cfg);
    EXPECT_FALSE(soft.converged);
    EXPECT_EQ(soft.iterations, 1);
    cfg.throw_on_nonconvergence = true;
    try {
        minimize_on_simplex(obj, 9, cfg);
        FAIL();
    } catch (const SolverNotConverged& e) {
        EXPECT_EQ(e.best_iterate().x.size(), 9u);
        EXPECT_LT(e.best_iterate().value, obj.value(AllocationVector::uniform(9).vector()));
    }
}

TEST(Solver, ConvergesWithinDefaultBudget) {
    const auto& data = star_sites();
    Rng rng(3);
    const MixtureObjective obj(default_schema(), DistanceMetric::MultivariateKLD, data.target, CohortCounts(80),
                               draw_estimates(init_jeffreys(9, 80), 1, rng), 500);
    const auto r = minimize_on_simplex(obj, 9);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.iterations, 10000);
}

TEST(RoundAllocation, Examples) {
    EXPECT_EQ(round_allocation(AllocationVector({0.5, 0.3, 0.2}), 500).counts, (std::vector<std::int64_t>{250, 150, 100}));
    EXPECT_EQ(round_allocation(AllocationVector({1.0 / 3, 1.0 / 3, 1.0 / 3}), 500).counts,
              (std::vector<std::int64_t>{167, 167, 166}));
    EXPECT_EQ(round_allocation(AllocationVector::one_hot(4, 0), 500).counts, (std::vector<std::int64_t>{500, 0, 0, 0}));
    EXPECT_EQ(round_allocation(AllocationVector::uniform(9), 500).counts,
              (std::vector<std::int64_t>{56, 56, 56, 56, 56, 55, 55, 55, 55}));
    EXPECT_EQ(round_allocation(AllocationVector::uniform(3), 0).counts, (std::vector<std::int64_t>{0, 0, 0}));
}

TEST(RoundAllocation, ExactSumAndQuotaBound) {
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 1 + gen() % 12;
        auto rho = random_dist(gen, n, 0.0);
        if (trial % 5 == 0 && n > 1) {
            rho[gen() % n] = 0.0;
            rho = detail::normalized(rho, "rho");
        }
        const std::int64_t batch = static_cast<std::int64_t>(gen() % 2000);
        const AllocationVector a(rho);
        const auto r = round_allocation(a, batch);
        std::int64_t sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            EXPECT_GE(r.counts[j], 0);
            EXPECT_LT(std::abs(static_cast<double>(r.counts[j]) - static_cast<double>(batch) * a[j]), 1.0);
            sum += r.counts[j];
        }
        EXPECT_EQ(sum, batch);
        EXPECT_EQ(r.batch, batch);
    }
}

TEST(NaivePolicies, UniformAndRandomSite) {
    Rng rng(5);
    const auto u = naive_policy(PolicyKind::Uniform, 9, rng);
    for (std::size_t j = 0; j < 9; ++j) EXPECT_DOUBLE_EQ(u[j], 1.0 / 9.0);
    EXPECT_EQ(naive_policy(PolicyKind::RandomSite, 1, rng)[0], 1.0);
    std::vector<int> hits(9, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto a = naive_policy(PolicyKind::RandomSite, 9, rng);
        for (std::size_t j = 0; j < 9; ++j) hits[j] += a[j] == 1.0;
    }
    for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / n, 1.0 / 9.0, 0.01);
    EXPECT_THROW(naive_policy(PolicyKind::Thompson, 9, rng), std::invalid_argument);
    EXPECT_THROW(naive_policy(PolicyKind::Uniform, 0, rng), std::invalid_argument);
}

TEST(InformedStatic, IdenticalSitesSplitEvenlyOnAverage) {
    const auto& data = star_sites();
    const std::vector<SiteModel> twins{data.sites[0], data.sites[0]};
    const PolicyContext ctx{default_schema(), data.target};
    double sum = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng prior = make_stream(seed, "prior"), policy = make_stream(seed, "policy");
        sum += informed_static_policy(ctx, twins, 1000, prior, policy).allocation[0];
    }
    EXPECT_NEAR(sum / 100, 0.5, 0.05);
}

TEST(InformedStatic, LargeSampleLimitMatchesExactKnowledge) {
    const auto& data = star_sites();
    const auto& schema = default_schema();
    const PolicyContext ctx{schema, data.target};
    Rng prior = make_stream(1, "prior"), policy = make_stream(1, "policy");
    const auto d = informed_static_policy(ctx, data.sites, 10000000, prior, policy);
    SiteEstimates exact;
    for (const auto& s : data.sites) exact.push_back(s.response.vector());
    const MixtureObjective obj(schema, DistanceMetric::MultivariateKLD, data.target, CohortCounts(80), {exact}, 500);
    const auto ideal = adaptive_from_estimates(obj, {});
    for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(d.allocation[j], ideal.allocation[j], 0.02);
    EXPECT_THROW(informed_static_policy(ctx, data.sites, 0, prior, policy), std::invalid_argument);
}
