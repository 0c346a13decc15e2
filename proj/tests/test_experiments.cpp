#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "cohort/experiments.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cohort;
using testing_support::star_sites;

namespace {

ExperimentSpec spec_for(PolicyKind kind, PriorScheme prior, int replicates, std::uint64_t base_seed = 0) {
    ExperimentSpec s;
    s.label = std::string(to_string(kind));
    s.base.policy.kind = kind;
    s.base.prior.scheme = prior;
    s.replicates = replicates;
    s.base_seed = base_seed;
    return s;
}

}  // namespace

TEST(CredibleInterval, ConstantSamplesCollapse) {
    const std::vector<double> c(10, 0.42);
    const auto ci = credible_interval(c);
    EXPECT_EQ(ci.lower, 0.42);
    EXPECT_EQ(ci.mean, 0.42);
    EXPECT_EQ(ci.upper, 0.42);
    EXPECT_THROW(credible_interval(std::vector<double>{1.0}), std::invalid_argument);
    EXPECT_THROW(credible_interval(std::vector<double>{1.0, 2.0}, 1.0), std::invalid_argument);
}

TEST(CredibleInterval, HalfWidthMatchesTQuantile) {
    // 100 samples with mean 0.1157 and sample sd exactly 0.004.
    std::vector<double> v(100);
    for (std::size_t i = 0; i < 100; ++i) v[i] = (i % 2 ? 1.0 : -1.0);
    const double scale = 0.004 / std::sqrt(100.0 / 99.0);
    for (double& x : v) x = 0.1157 + scale * x;
    const auto ci = credible_interval(v);
    const double t = oracle::student_t_quantile(0.975, 99);
    EXPECT_NEAR(t, 1.9842, 1e-4);
    EXPECT_NEAR(ci.mean, 0.1157, 1e-12);
    EXPECT_NEAR(ci.upper - ci.mean, t * 0.004 / 10.0, 1e-9);
    EXPECT_NEAR(ci.upper - ci.mean, 0.00079, 5e-6);
    EXPECT_NEAR(ci.mean - ci.lower, ci.upper - ci.mean, 1e-15);
}

TEST(CredibleInterval, OtherLevelsAgreeWithOracle) {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t size : {2u, 5u, 30u}) {
        std::vector<double> v(size);
        for (double& x : v) x = n(gen);
        double mean = 0, ss = 0;
        for (double x : v) mean += x;
        mean /= size;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double s = std::sqrt(ss / (size - 1));
        for (double level : {0.8, 0.95}) {
            const auto ci = credible_interval(v, level);
            const double t = oracle::student_t_quantile(0.5 + level / 2, size - 1.0);
            EXPECT_NEAR(ci.upper - ci.mean, t * s / std::sqrt(size), 1e-6 * (1 + t));
        }
    }
}

TEST(CredibleInterval, PermutationInvariant) {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(0.09, 0.13);
    std::vector<double> v(100);
    for (double& x : v) x = u(gen);
    const auto ref = credible_interval(v);
    for (int k = 0; k < 20; ++k) {
        std::shuffle(v.begin(), v.end(), gen);
        EXPECT_EQ(credible_interval(v), ref);
    }
}

TEST(CredibleInterval, OverlapIsSymmetric) {
    const CredibleInterval a{0.1, 0.2, 0.3}, b{0.25, 0.3, 0.35}, c{0.31, 0.4, 0.5};
    EXPECT_TRUE(a.overlaps(b));
    EXPECT_TRUE(b.overlaps(a));
    EXPECT_FALSE(a.overlaps(c));
    EXPECT_FALSE(c.overlaps(a));
}

TEST(SweepGrid, InclusiveAndValidated) {
    const auto g = sweep_grid(0.8, 1.4, 0.05);
    ASSERT_EQ(g.size(), 13u);
    EXPECT_DOUBLE_EQ(g.front(), 0.8);
    EXPECT_DOUBLE_EQ(g[4], 1.0);
    EXPECT_DOUBLE_EQ(g.back(), 1.4);
    EXPECT_EQ(sweep_grid(0.7, 1.4, 0.05).size(), 15u);
    EXPECT_THROW(sweep_grid(1.0, 0.5, 0.1), std::invalid_argument);
    EXPECT_THROW(sweep_grid(0.5, 1.0, 0.0), std::invalid_argument);
    EXPECT_EQ(parse_sweep_axis("kappa"), SweepAxis::Bias);
    EXPECT_EQ(parse_sweep_axis(to_string(SweepAxis::Shift)), SweepAxis::Shift);
    EXPECT_THROW(parse_sweep_axis("mu"), std::invalid_argument);
}

TEST(Replicates, DegenerateWorldGivesTinyInterval) {
    const auto& data = star_sites();
    const std::vector<SiteModel> one{SiteModel{"T", data.target, {}, 100.0}};
    const auto agg = run_replicates(spec_for(PolicyKind::Uniform, PriorScheme::Uninformed, 2), default_schema(), one,
                                    data.target);
    const auto& ci = agg.final_interval();
    EXPECT_LE(ci.lower, ci.mean);
    EXPECT_LE(ci.mean, ci.upper);
    EXPECT_LT(ci.mean, 0.01);
    EXPECT_LT(ci.upper - ci.lower, 0.02);
    EXPECT_THROW(run_replicates(spec_for(PolicyKind::Uniform, PriorScheme::Uninformed, 1), default_schema(), one,
                                data.target),
                 std::invalid_argument);
}

TEST(Replicates, SeedsAreBasePlusIndexAndJobCountIndependent) {
    const auto& data = star_sites();
    auto spec = spec_for(PolicyKind::DistributedAdaptive, PriorScheme::Uninformed, 6, 40);
    const auto serial = run_replicate_results(spec, default_schema(), data.sites, data.target);
    spec.jobs = 3;
    const auto threaded = run_replicate_results(spec, default_schema(), data.sites, data.target);
    for (std::size_t i = 0; i < serial.size(); ++i) {
        EXPECT_EQ(serial[i].config.seed, 40 + i);
        EXPECT_EQ(serial[i].iterations, threaded[i].iterations);
    }
    EXPECT_EQ(aggregate("x", default_schema(), serial).series, aggregate("x", default_schema(), threaded).series);
}

TEST(Replicates, AggregationIsPermutationInvariant) {
    const auto& data = star_sites();
    auto runs = run_replicate_results(spec_for(PolicyKind::Thompson, PriorScheme::Uninformed, 8), default_schema(),
                                      data.sites, data.target);
    const auto ref = aggregate("t", default_schema(), runs);
    std::mt19937_64 gen(3);
    std::shuffle(runs.begin(), runs.end(), gen);
    const auto again = aggregate("t", default_schema(), runs);
    EXPECT_EQ(again.series, ref.series);
    for (std::size_t t = 0; t < 20; ++t) {
        for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(again.mean_allocation[t][j], ref.mean_allocation[t][j], 1e-15);
    }
}

TEST(Replicates, AggregateShapesAndMeans) {
    const auto& data = star_sites();
    const auto runs = run_replicate_results(spec_for(PolicyKind::Uniform, PriorScheme::Uninformed, 4), default_schema(),
                                            data.sites, data.target);
    const auto agg = aggregate("u", default_schema(), runs);
    EXPECT_EQ(agg.replicates, 4);
    EXPECT_EQ(agg.site_names.size(), 9u);
    EXPECT_EQ(agg.mean_allocation.size(), 20u);
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        ASSERT_EQ(agg.series[m].size(), 20u);
        double s = 0;
        for (const auto& r : runs) s += r.iterations[9].distances[m];
        EXPECT_NEAR(agg.series[m][9].mean, s / 4, 1e-15);
        ASSERT_EQ(agg.final_samples[m].size(), 4u);
    }
    for (double v : agg.mean_allocation[0]) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
    double marg = 0;
    for (double v : agg.mean_final_marginals.per_attribute[2]) marg += v;
    EXPECT_NEAR(marg, 1.0, 1e-12);
}

TEST(Replicates, IntervalShrinksAndMeansAreStable) {
    const auto& data = star_sites();
    const auto a10 = run_replicates(spec_for(PolicyKind::DistributedAdaptive, PriorScheme::Uninformed, 10),
                                    default_schema(), data.sites, data.target);
    const auto a50 = run_replicates(spec_for(PolicyKind::DistributedAdaptive, PriorScheme::Uninformed, 50),
                                    default_schema(), data.sites, data.target);
    const auto a100 = run_replicates(spec_for(PolicyKind::DistributedAdaptive, PriorScheme::Uninformed, 100, 1000),
                                     default_schema(), data.sites, data.target);
    const auto w = [](const CredibleInterval& c) { return c.upper - c.lower; };
    EXPECT_LT(w(a100.final_interval()), w(a10.final_interval()));
    const auto& ci50 = a50.final_interval();
    EXPECT_GE(a100.final_interval().mean, ci50.lower);
    EXPECT_LE(a100.final_interval().mean, ci50.upper);
}

TEST(Sweep, UnitFactorEqualsStaticRun) {
    const auto& data = star_sites();
    const auto spec = spec_for(PolicyKind::Uniform, PriorScheme::Uninformed, 3);
    const std::vector<double> one{1.0};
    const auto points = sweep(spec, SweepAxis::Shift, one, default_schema(), data.sites, data.target);
    const auto base = run_replicates(spec, default_schema(), data.sites, data.target);
    ASSERT_EQ(points.size(), 1u);
    EXPECT_EQ(points[0].factor, 1.0);
    EXPECT_EQ(points[0].series, base.series);
}

TEST(Sweep, SortedByFactorAndValidated) {
    const auto& data = star_sites();
    const auto spec = spec_for(PolicyKind::Uniform, PriorScheme::Uninformed, 2);
    const std::vector<double> pts{1.2, 0.9};
    const auto out = sweep(spec, SweepAxis::Bias, pts, default_schema(), data.sites, data.target);
    EXPECT_EQ(out[0].factor, 0.9);
    EXPECT_EQ(out[1].factor, 1.2);
    const std::vector<double> none;
    EXPECT_THROW(sweep(spec, SweepAxis::Bias, none, default_schema(), data.sites, data.target), std::invalid_argument);
    const std::vector<double> bad{0.0};
    EXPECT_THROW(sweep(spec, SweepAxis::Bias, bad, default_schema(), data.sites, data.target), std::invalid_argument);
    EXPECT_THROW(sweep(spec, SweepAxis::None, pts, default_schema(), data.sites, data.target), std::invalid_argument);
}

TEST(Replicates, FailureNamesTheSeed) {
    const auto& data = star_sites();
    auto sites = data.sites;
    sites[0].record_count = 0.0;  // fully informed prior without a mass cannot be built
    auto spec = spec_for(PolicyKind::DistributedAdaptive, PriorScheme::Informed, 3, 70);
    try {
        run_replicates(spec, default_schema(), sites, data.target);
        FAIL();
    } catch (const ReplicateFailure& e) {
        EXPECT_EQ(e.seed(), 70u);
    }
}
