#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cohort/demographics.hpp"
#include "cohort/schema.hpp"

namespace cohort {

enum class DistanceMetric { MultivariateKLD, UnivariateKLDSum, DistanceSummary };

inline std::string_view to_string(DistanceMetric m) {
    switch (m) {
        case DistanceMetric::MultivariateKLD: return "mkld";
        case DistanceMetric::UnivariateKLDSum: return "ukld";
        case DistanceMetric::DistanceSummary: return "distance_summary";
    }
    return "?";
}

inline DistanceMetric parse_metric(std::string_view s) {
    if (s == "mkld" || s == "multivariate_kld") return DistanceMetric::MultivariateKLD;
    if (s == "ukld" || s == "univariate_kld_sum") return DistanceMetric::UnivariateKLDSum;
    if (s == "distance_summary" || s == "ds") return DistanceMetric::DistanceSummary;
    throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

/// Natural log. The Table 2 calibration fits nats better than bits.
inline constexpr double kDefaultLogBase = std::numbers::e;

/// Thrown when the first argument has mass where the second has none.
class InfiniteDivergence : public std::domain_error {
public:
    explicit InfiniteDivergence(std::size_t cell)
        : std::domain_error("infinite divergence: mass in cell " + std::to_string(cell) +
                            " where the reference has none"),
          cell_(cell) {}
    [[nodiscard]] std::size_t cell() const noexcept { return cell_; }

private:
    std::size_t cell_;
};

/// KL(q || p) = sum q log(q/p), with 0 log 0 = 0.
inline double kl_divergence(std::span<const double> q, std::span<const double> p,
                            double log_base = kDefaultLogBase) {
    if (q.size() != p.size()) throw std::invalid_argument("kl_divergence: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] <= 0.0) continue;
        if (p[i] <= 0.0) throw InfiniteDivergence(i);
        sum += q[i] * std::log(q[i] / p[i]);
    }
    // Rounding can leave a tiny negative value for q == p.
    return std::max(0.0, sum) / std::log(log_base);
}

/// Jensen-Shannon divergence in bits, bounded by [0, 1].
inline double js_divergence_bits(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("js_divergence: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double m = 0.5 * (a[i] + b[i]);
        if (a[i] > 0.0) sum += 0.5 * a[i] * std::log2(a[i] / m);
        if (b[i] > 0.0) sum += 0.5 * b[i] * std::log2(b[i] / m);
    }
    return std::clamp(sum, 0.0, 1.0);
}

inline double js_distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(js_divergence_bits(a, b));
}

inline double univariate_kld_sum(const AttributeSchema& schema, std::span<const double> cohort,
                                 std::span<const double> target, double log_base = kDefaultLogBase) {
    double sum = 0.0;
    for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
        const auto qm = marginal_of(schema, cohort, a);
        const auto pm = marginal_of(schema, target, a);
        sum += kl_divergence(qm, pm, log_base);
    }
    return sum;
}

/// Mean over attributes of the Jensen-Shannon distance between marginals.
inline double distance_summary(const AttributeSchema& schema, std::span<const double> cohort,
                               std::span<const double> target) {
    double sum = 0.0;
    for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
        sum += js_distance(marginal_of(schema, cohort, a), marginal_of(schema, target, a));
    }
    return sum / static_cast<double>(schema.attribute_count());
}

inline double evaluate(DistanceMetric metric, const AttributeSchema& schema, std::span<const double> cohort,
                       std::span<const double> target, double log_base = kDefaultLogBase) {
    if (cohort.size() != schema.cell_count() || target.size() != schema.cell_count()) {
        throw std::invalid_argument("distribution length does not match schema");
    }
    switch (metric) {
        case DistanceMetric::MultivariateKLD: return kl_divergence(cohort, target, log_base);
        case DistanceMetric::UnivariateKLDSum: return univariate_kld_sum(schema, cohort, target, log_base);
        case DistanceMetric::DistanceSummary: return distance_summary(schema, cohort, target);
    }
    throw std::invalid_argument("unknown metric");
}

inline double evaluate(DistanceMetric metric, const AttributeSchema& schema, const JointDistribution& cohort,
                       const JointDistribution& target, double log_base = kDefaultLogBase) {
    return evaluate(metric, schema, cohort.probs(), target.probs(), log_base);
}

}  // namespace cohort
