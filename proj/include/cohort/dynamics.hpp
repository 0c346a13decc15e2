#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "cohort/schema.hpp"

namespace cohort {

/// out[i] = d[i]^e / sum_k d[k]^e, with 0^e = 0. Evaluated in log space so
/// large exponents do not underflow the dominant cells.
inline std::vector<double> exponent_tilt(std::span<const double> d, double exponent) {
    if (!(exponent > 0.0) || !std::isfinite(exponent)) {
        throw std::invalid_argument("tilt exponent must be positive and finite");
    }
    std::vector<double> out(d.size(), 0.0);
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] < 0.0) throw std::invalid_argument("negative probability");
        if (d[i] > 0.0) max_log = std::max(max_log, exponent * std::log(d[i]));
    }
    if (!std::isfinite(max_log)) throw std::logic_error("tilt of an all-zero vector");
    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] > 0.0) {
            out[i] = std::exp(exponent * std::log(d[i]) - max_log);
            sum += out[i];
        }
    }
    for (double& x : out) x /= sum;
    return out;
}

inline std::vector<double> distribution_shift(std::span<const double> d, double shift) {
    return exponent_tilt(d, shift);
}

/// Tilt with exponent 1 + allocation * (bias - 1).
inline std::vector<double> causal_bias(std::span<const double> d, double allocation, double bias) {
    if (allocation < 0.0 || allocation > 1.0) {
        throw std::invalid_argument("allocation fraction must lie in [0, 1]");
    }
    if (!(bias > 0.0)) throw std::invalid_argument("causal bias factor must be positive");
    return exponent_tilt(d, 1.0 + allocation * (bias - 1.0));
}

/// Advances a site's response one iteration: recruitment bias, then time shift.
inline SiteModel step_dynamics(const SiteModel& site, double allocation) {
    site.dynamics.validate();
    SiteModel next = site;
    if (site.dynamics.bias == 1.0 && site.dynamics.shift == 1.0) return next;
    auto biased = causal_bias(site.response.probs(), allocation, site.dynamics.bias);
    next.response = JointDistribution::normalize(distribution_shift(biased, site.dynamics.shift));
    return next;
}

}  // namespace cohort
