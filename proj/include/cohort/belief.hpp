#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cohort/random.hpp"
#include "cohort/schema.hpp"

namespace cohort {

inline constexpr double kJeffreysConcentration = 0.5;
inline constexpr std::int64_t kDefaultPriorSamples = 1000;

enum class PriorScheme { Uninformed, Empiric, Informed };

inline std::string_view to_string(PriorScheme p) {
    switch (p) {
        case PriorScheme::Uninformed: return "uninformed";
        case PriorScheme::Empiric: return "empiric";
        case PriorScheme::Informed: return "informed";
    }
    return "?";
}

inline PriorScheme parse_prior(std::string_view s) {
    if (s == "uninformed" || s == "jeffreys") return PriorScheme::Uninformed;
    if (s == "empiric" || s == "empirical") return PriorScheme::Empiric;
    if (s == "informed" || s == "fully_informed") return PriorScheme::Informed;
    throw std::invalid_argument("unknown prior scheme '" + std::string(s) + "'");
}

/// Per-site Dirichlet concentration vectors over the schema cells.
class DirichletBelief {
public:
    DirichletBelief() = default;

    explicit DirichletBelief(std::vector<std::vector<double>> alpha) : alpha_(std::move(alpha)) {
        for (const auto& a : alpha_) {
            if (a.size() != alpha_.front().size()) throw std::invalid_argument("ragged concentration matrix");
            for (double x : a) {
                if (!(x > 0.0)) throw std::invalid_argument("Dirichlet concentrations must be positive");
            }
        }
    }

    [[nodiscard]] std::size_t site_count() const noexcept { return alpha_.size(); }
    [[nodiscard]] std::size_t cell_count() const noexcept { return alpha_.empty() ? 0 : alpha_.front().size(); }
    [[nodiscard]] std::span<const double> alpha(std::size_t site) const { return alpha_.at(site); }

    [[nodiscard]] double total_concentration(std::size_t site) const {
        double s = 0.0;
        for (double x : alpha_.at(site)) s += x;
        return s;
    }

    [[nodiscard]] std::vector<double> posterior_mean(std::size_t site) const {
        const double total = total_concentration(site);
        std::vector<double> out(alpha_.at(site));
        for (double& x : out) x /= total;
        return out;
    }

    /// Conjugate update: adds observed counts to one site's concentrations.
    void update_with_counts(std::size_t site, std::span<const std::int64_t> counts) {
        auto& a = alpha_.at(site);
        if (counts.size() != a.size()) throw std::invalid_argument("count vector length mismatch");
        for (std::int64_t c : counts) {
            if (c < 0) throw std::invalid_argument("negative count in belief update");
        }
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += static_cast<double>(counts[i]);
    }

    friend bool operator==(const DirichletBelief&, const DirichletBelief&) = default;

private:
    std::vector<std::vector<double>> alpha_;
};

inline DirichletBelief init_jeffreys(std::size_t n_sites, std::size_t n_cells) {
    if (n_cells < 2) throw std::invalid_argument("need at least two cells");
    return DirichletBelief(std::vector<std::vector<double>>(
        n_sites, std::vector<double>(n_cells, kJeffreysConcentration)));
}

/// alpha_j = mass * response_j. Cells with zero response get a tiny floor
/// so the concentration stays a valid Dirichlet parameter.
inline DirichletBelief init_informed(std::span<const SiteModel> sites, double mass = 1.0) {
    if (!(mass > 0.0)) throw std::invalid_argument("informed prior mass must be positive");
    std::vector<std::vector<double>> alpha;
    alpha.reserve(sites.size());
    for (const auto& s : sites) {
        std::vector<double> a(s.response.vector());
        for (double& x : a) x = std::max(x * mass, 1e-300);
        alpha.push_back(std::move(a));
    }
    return DirichletBelief(std::move(alpha));
}

/// Jeffreys base plus the counts of `samples_per_site` draws from each true response.
inline DirichletBelief init_empiric(std::span<const SiteModel> sites, std::int64_t samples_per_site, Rng& rng) {
    if (samples_per_site < 0) throw std::invalid_argument("negative sample count");
    if (sites.empty()) return {};
    auto belief = init_jeffreys(sites.size(), sites.front().response.size());
    for (std::size_t j = 0; j < sites.size(); ++j) {
        belief.update_with_counts(j, sample_multinomial(sites[j].response.probs(), samples_per_site, rng));
    }
    return belief;
}

inline std::vector<double> sample_estimate(const DirichletBelief& belief, std::size_t site, Rng& rng) {
    return sample_dirichlet(belief.alpha(site), rng);
}

}  // namespace cohort
