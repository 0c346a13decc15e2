#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "cohort/demographics.hpp"
#include "cohort/simulator.hpp"

namespace cohort {

struct CredibleInterval {
    double lower = 0.0;
    double mean = 0.0;
    double upper = 0.0;

    [[nodiscard]] bool overlaps(const CredibleInterval& other) const noexcept {
        return lower <= other.upper && other.lower <= upper;
    }
    friend bool operator==(const CredibleInterval&, const CredibleInterval&) = default;
};

namespace detail {

// Sorted summation so the result does not depend on replicate order.
inline double order_free_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace detail

/// Credible interval for a mean under the non-informative prior: the
/// posterior is Student-t with n-1 degrees of freedom at the sample mean,
/// scale s / sqrt(n).
inline CredibleInterval credible_interval(std::span<const double> samples, double level = 0.95) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("credible interval needs at least two samples");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("credible level must lie in (0, 1)");
    const std::vector<double> v(samples.begin(), samples.end());
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo == *hi) return {*lo, *lo, *lo};
    const double mean = detail::order_free_sum(v) / static_cast<double>(n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
    const double var = detail::order_free_sum(sq) / static_cast<double>(n - 1);
    if (var == 0.0) return {mean, mean, mean};
    const boost::math::students_t dist(static_cast<double>(n - 1));
    const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
    const double half = t * std::sqrt(var / static_cast<double>(n));
    return {mean - half, mean, mean + half};
}

enum class SweepAxis { None, Shift, Bias };

inline std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::None: return "none";
        case SweepAxis::Shift: return "lambda";
        case SweepAxis::Bias: return "kappa";
    }
    return "?";
}

inline SweepAxis parse_sweep_axis(std::string_view s) {
    if (s == "none") return SweepAxis::None;
    if (s == "lambda" || s == "shift") return SweepAxis::Shift;
    if (s == "kappa" || s == "bias") return SweepAxis::Bias;
    throw std::invalid_argument("unknown sweep axis '" + std::string(s) + "'");
}

/// Inclusive grid start, start+step, ..., stop (within half a step of rounding).
inline std::vector<double> sweep_grid(double start, double stop, double step) {
    if (!(step > 0.0) || stop < start) throw std::invalid_argument("invalid sweep range");
    std::vector<double> out;
    const auto count = static_cast<std::int64_t>(std::floor((stop - start) / step + 0.5));
    for (std::int64_t k = 0; k <= count; ++k) {
        out.push_back(std::round((start + static_cast<double>(k) * step) * 1e9) / 1e9);
    }
    return out;
}

struct ExperimentSpec {
    std::string label;
    SimulationConfig base;
    int replicates = 100;
    std::uint64_t base_seed = 0;
    unsigned jobs = 1;
};

struct AggregateResult {
    std::string label;
    PolicyKind policy = PolicyKind::Uniform;
    PriorScheme prior = PriorScheme::Uninformed;
    int replicates = 0;
    std::uint64_t base_seed = 0;
    std::optional<double> factor;  // sweep coordinate
    std::vector<std::string> site_names;
    // [metric][iteration]
    std::array<std::vector<CredibleInterval>, kMetricCount> series;
    // [iteration][site], mean over replicates
    std::vector<std::vector<double>> mean_allocation;
    // Mean final cohort marginal per attribute.
    MarginalSet mean_final_marginals;
    // Raw final distances per replicate, [metric][replicate].
    std::array<std::vector<double>, kMetricCount> final_samples;

    [[nodiscard]] const CredibleInterval& final_interval(DistanceMetric m = DistanceMetric::MultivariateKLD) const {
        return series[metric_slot(m)].back();
    }

    static std::size_t metric_slot(DistanceMetric m) {
        for (std::size_t k = 0; k < kMetricCount; ++k) {
            if (kAllMetrics[k] == m) return k;
        }
        throw std::invalid_argument("unknown metric");
    }
};

class ReplicateFailure : public std::runtime_error {
public:
    ReplicateFailure(std::uint64_t seed, const std::string& what)
        : std::runtime_error("replicate with seed " + std::to_string(seed) + " failed: " + what), seed_(seed) {}
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

/// Summarizes finished runs. Order of `runs` does not affect the output.
inline AggregateResult aggregate(std::string label, const AttributeSchema& schema,
                                 std::span<const SimulationResult> runs) {
    if (runs.size() < 2) throw std::invalid_argument("aggregation needs at least two replicates");
    AggregateResult out;
    out.label = std::move(label);
    out.policy = runs.front().config.policy.kind;
    out.prior = runs.front().config.prior.scheme;
    out.replicates = static_cast<int>(runs.size());
    out.site_names = runs.front().site_names;
    std::uint64_t min_seed = runs.front().config.seed;
    for (const auto& r : runs) min_seed = std::min(min_seed, r.config.seed);
    out.base_seed = min_seed;

    const std::size_t T = runs.front().iterations.size();
    const std::size_t n = out.site_names.size();
    std::vector<double> column(runs.size());
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r].iterations.at(t).distances[m];
            out.series[m].push_back(credible_interval(column));
        }
        for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r].final_distances[m];
        out.final_samples[m] = column;
        std::sort(out.final_samples[m].begin(), out.final_samples[m].end());
    }
    out.mean_allocation.assign(T, std::vector<double>(n, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r].iterations[t].allocation[j];
            out.mean_allocation[t][j] = detail::order_free_sum(column) / static_cast<double>(runs.size());
        }
    }
    for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
        std::vector<double> mean(schema.category_count(a), 0.0);
        for (std::size_t c = 0; c < mean.size(); ++c) {
            for (std::size_t r = 0; r < runs.size(); ++r) {
                const auto dist = runs[r].cohort.distribution();
                column[r] = marginal_of(schema, dist.probs(), a)[c];
            }
            mean[c] = detail::order_free_sum(column) / static_cast<double>(runs.size());
        }
        out.mean_final_marginals.per_attribute.push_back(std::move(mean));
    }
    return out;
}

/// Runs `count` independent tasks on up to `jobs` threads; results are
/// stored by index so the output does not depend on scheduling.
template <class Task>
auto parallel_indexed(std::size_t count, unsigned jobs, Task task) {
    using R = decltype(task(std::size_t{0}));
    std::vector<std::optional<R>> slots(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                slots[i].emplace(task(i));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

/// Replicate i uses seed base_seed + i.
inline std::vector<SimulationResult> run_replicate_results(const ExperimentSpec& spec, const AttributeSchema& schema,
                                                           const std::vector<SiteModel>& sites,
                                                           const JointDistribution& target) {
    if (spec.replicates < 1) throw std::invalid_argument("replicate count must be positive");
    return parallel_indexed(static_cast<std::size_t>(spec.replicates), spec.jobs, [&](std::size_t i) {
        SimulationConfig cfg = spec.base;
        cfg.seed = spec.base_seed + i;
        try {
            return run_simulation(cfg, schema, sites, target);
        } catch (const std::exception& e) {
            throw ReplicateFailure(cfg.seed, e.what());
        }
    });
}

inline AggregateResult run_replicates(const ExperimentSpec& spec, const AttributeSchema& schema,
                                      const std::vector<SiteModel>& sites, const JointDistribution& target) {
    if (spec.replicates < 2) throw std::invalid_argument("credible intervals need at least two replicates");
    const auto runs = run_replicate_results(spec, schema, sites, target);
    auto out = aggregate(spec.label, schema, runs);
    out.base_seed = spec.base_seed;
    return out;
}

/// One replicate battery per factor value on the chosen dynamics axis.
inline std::vector<AggregateResult> sweep(const ExperimentSpec& spec, SweepAxis axis, std::span<const double> points,
                                          const AttributeSchema& schema, const std::vector<SiteModel>& sites,
                                          const JointDistribution& target) {
    if (axis == SweepAxis::None) throw std::invalid_argument("sweep needs an axis");
    if (points.empty()) throw std::invalid_argument("empty sweep");
    std::vector<double> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<AggregateResult> out;
    for (double v : sorted) {
        if (!(v > 0.0)) throw std::invalid_argument("sweep factors must be positive");
        ExperimentSpec point = spec;
        (axis == SweepAxis::Shift ? point.base.dynamics.shift : point.base.dynamics.bias) = v;
        auto agg = run_replicates(point, schema, sites, target);
        agg.factor = v;
        out.push_back(std::move(agg));
    }
    return out;
}

}  // namespace cohort
