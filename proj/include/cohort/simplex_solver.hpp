#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cohort {

struct SolverConfig {
    double improvement_tolerance = 1e-9;  // stop when one step gains less than this
    double gap_tolerance = 1e-6;          // stop when the Frank-Wolfe gap certifies optimality
    int max_iterations = 10000;
    double initial_step = 1.0;
    double finite_difference_step = 1e-6;
    bool throw_on_nonconvergence = false;
};

struct SolverResult {
    std::vector<double> x;
    double value = 0.0;
    double gap = 0.0;  // sum_j x_j g_j - min_j g_j at the returned point
    int iterations = 0;
    bool converged = false;
};

class SolverNotConverged : public std::runtime_error {
public:
    explicit SolverNotConverged(SolverResult best)
        : std::runtime_error("simplex solver did not converge in " + std::to_string(best.iterations) +
                             " iterations (objective " + std::to_string(best.value) + ")"),
          best_(std::move(best)) {}
    [[nodiscard]] const SolverResult& best_iterate() const noexcept { return best_; }

private:
    SolverResult best_;
};

template <class F>
concept SimplexObjective = requires(const F& f, std::span<const double> x) {
    { f.value(x) } -> std::convertible_to<double>;
    { f.gradient(x) } -> std::convertible_to<std::vector<double>>;
};

/// Central-difference gradient of `value`, falling back to one-sided
/// differences next to the boundary.
template <class ValueFn>
std::vector<double> finite_difference_gradient(const ValueFn& value, std::span<const double> x, double h) {
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> g(x.size());
    const double f0 = value(std::span<const double>(probe));
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double orig = probe[j];
        probe[j] = orig + h;
        const double up = value(std::span<const double>(probe));
        if (orig >= h) {
            probe[j] = orig - h;
            const double down = value(std::span<const double>(probe));
            g[j] = (up - down) / (2.0 * h);
        } else {
            g[j] = (up - f0) / h;
        }
        probe[j] = orig;
    }
    return g;
}

/// Minimizes a function over the probability simplex by exponentiated
/// gradient (entropic mirror descent) from the barycenter, with Armijo
/// backtracking and step growth after each accepted step.
template <SimplexObjective F>
SolverResult minimize_on_simplex(const F& objective, std::size_t n, const SolverConfig& config = {}) {
    if (n == 0) throw std::invalid_argument("simplex of dimension zero");
    SolverResult r;
    r.x.assign(n, 1.0 / static_cast<double>(n));
    r.value = objective.value(std::span<const double>(r.x));
    if (n == 1) {
        r.converged = true;
        return r;
    }
    double step = config.initial_step;
    std::vector<double> trial(n);
    for (r.iterations = 0; r.iterations < config.max_iterations; ++r.iterations) {
        const std::vector<double> g = objective.gradient(std::span<const double>(r.x));
        const double g_min = *std::min_element(g.begin(), g.end());
        r.gap = std::inner_product(r.x.begin(), r.x.end(), g.begin(), 0.0) - g_min;
        if (!(r.gap > config.gap_tolerance)) {
            r.converged = true;
            break;
        }
        bool accepted = false;
        double next_value = r.value;
        for (int attempt = 0; attempt < 60; ++attempt) {
            double z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                trial[j] = r.x[j] * std::exp(-step * (g[j] - g_min));
                z += trial[j];
            }
            double decrease = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                trial[j] /= z;
                decrease += g[j] * (r.x[j] - trial[j]);
            }
            next_value = objective.value(std::span<const double>(trial));
            if (std::isfinite(next_value) && next_value <= r.value - 1e-4 * decrease) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No descent along the mirror step at any scale: stationary to
            // working precision.
            r.converged = true;
            break;
        }
        const double improvement = r.value - next_value;
        r.x = trial;
        r.value = next_value;
        step = std::min(step * 2.0, 1e8);
        if (improvement < config.improvement_tolerance) {
            r.converged = true;
            ++r.iterations;
            break;
        }
    }
    if (!r.converged && config.throw_on_nonconvergence) throw SolverNotConverged(r);
    return r;
}

}  // namespace cohort
