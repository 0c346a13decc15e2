#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace cohort {

using Rng = std::mt19937_64;

namespace detail {

inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Independent generator for a named purpose under a root seed, so that
/// enabling one consumer never shifts another's sequence.
inline Rng make_stream(std::uint64_t root_seed, std::string_view name) {
    const std::uint64_t a = detail::splitmix64(root_seed);
    const std::uint64_t b = detail::splitmix64(a ^ detail::fnv1a(name));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return Rng(seq);
}

/// Dirichlet draw from normalized Gamma(alpha_i, 1) variates.
inline std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
    std::vector<double> out(alpha.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (!(alpha[i] > 0.0)) throw std::invalid_argument("Dirichlet concentration must be positive");
        std::gamma_distribution<double> gamma(alpha[i], 1.0);
        out[i] = gamma(rng);
        sum += out[i];
    }
    if (!(sum > 0.0)) {
        // Every variate underflowed (only possible for tiny concentrations):
        // the draw is a vertex, chosen proportionally to alpha.
        std::discrete_distribution<std::size_t> pick(alpha.begin(), alpha.end());
        std::fill(out.begin(), out.end(), 0.0);
        out[pick(rng)] = 1.0;
        return out;
    }
    for (double& x : out) x /= sum;
    return out;
}

/// Counts of `n` independent categorical draws, via sequential conditional binomials.
inline std::vector<std::int64_t> sample_multinomial(std::span<const double> probs, std::int64_t n, Rng& rng) {
    if (n < 0) throw std::invalid_argument("negative draw count");
    std::vector<std::int64_t> out(probs.size(), 0);
    std::vector<double> tail(probs.size() + 1, 0.0);
    for (std::size_t i = probs.size(); i-- > 0;) tail[i] = tail[i + 1] + probs[i];
    std::int64_t remaining = n;
    for (std::size_t i = 0; i < probs.size() && remaining > 0; ++i) {
        if (probs[i] <= 0.0) continue;
        if (tail[i + 1] <= 0.0) {
            out[i] = remaining;
            break;
        }
        const double p = std::clamp(probs[i] / tail[i], 0.0, 1.0);
        std::binomial_distribution<std::int64_t> binom(remaining, p);
        out[i] = binom(rng);
        remaining -= out[i];
    }
    return out;
}

}  // namespace cohort
