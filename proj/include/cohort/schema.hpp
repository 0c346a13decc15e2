#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cohort {

inline constexpr double kProbabilityTolerance = 1e-9;

struct Attribute {
    std::string name;
    std::vector<std::string> categories;
};

/// Ordered list of categorical attributes. Cells are enumerated row-major:
/// the first attribute varies slowest, the last fastest.
class AttributeSchema {
public:
    AttributeSchema() = default;

    explicit AttributeSchema(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
        if (attributes_.empty()) {
            throw std::invalid_argument("schema needs at least one attribute");
        }
        cell_count_ = 1;
        for (const auto& a : attributes_) {
            if (a.categories.empty()) {
                throw std::invalid_argument("attribute '" + a.name + "' has no categories");
            }
            cell_count_ *= a.categories.size();
        }
    }

    [[nodiscard]] const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
    [[nodiscard]] std::size_t attribute_count() const noexcept { return attributes_.size(); }
    [[nodiscard]] std::size_t cell_count() const noexcept { return cell_count_; }
    [[nodiscard]] std::size_t category_count(std::size_t attribute) const {
        return attributes_.at(attribute).categories.size();
    }

    [[nodiscard]] std::size_t attribute_index(const std::string& name) const {
        for (std::size_t a = 0; a < attributes_.size(); ++a) {
            if (attributes_[a].name == name) return a;
        }
        throw std::out_of_range("unknown attribute '" + name + "'");
    }

    [[nodiscard]] std::size_t category_index(std::size_t attribute, const std::string& label) const {
        const auto& cats = attributes_.at(attribute).categories;
        for (std::size_t c = 0; c < cats.size(); ++c) {
            if (cats[c] == label) return c;
        }
        throw std::out_of_range("unknown category '" + label + "' for attribute '" +
                                attributes_[attribute].name + "'");
    }

    /// Category of `attribute` that `cell` belongs to.
    [[nodiscard]] std::size_t category_of(std::size_t cell, std::size_t attribute) const {
        std::size_t stride = 1;
        for (std::size_t a = attributes_.size(); a-- > attribute + 1;) {
            stride *= attributes_[a].categories.size();
        }
        return (cell / stride) % attributes_[attribute].categories.size();
    }

    [[nodiscard]] std::vector<std::size_t> decode(std::size_t cell) const {
        if (cell >= cell_count_) throw std::out_of_range("cell index out of range");
        std::vector<std::size_t> out(attributes_.size());
        for (std::size_t a = attributes_.size(); a-- > 0;) {
            const auto k = attributes_[a].categories.size();
            out[a] = cell % k;
            cell /= k;
        }
        return out;
    }

    [[nodiscard]] std::size_t encode(std::span<const std::size_t> categories) const {
        if (categories.size() != attributes_.size()) {
            throw std::invalid_argument("category tuple length does not match schema");
        }
        std::size_t cell = 0;
        for (std::size_t a = 0; a < attributes_.size(); ++a) {
            const auto k = attributes_[a].categories.size();
            if (categories[a] >= k) throw std::out_of_range("category index out of range");
            cell = cell * k + categories[a];
        }
        return cell;
    }

    [[nodiscard]] std::string cell_label(std::size_t cell) const {
        const auto idx = decode(cell);
        std::string out;
        for (std::size_t a = 0; a < idx.size(); ++a) {
            if (a) out += '|';
            out += attributes_[a].categories[idx[a]];
        }
        return out;
    }

    friend bool operator==(const AttributeSchema& lhs, const AttributeSchema& rhs) {
        if (lhs.attributes_.size() != rhs.attributes_.size()) return false;
        for (std::size_t a = 0; a < lhs.attributes_.size(); ++a) {
            if (lhs.attributes_[a].name != rhs.attributes_[a].name ||
                lhs.attributes_[a].categories != rhs.attributes_[a].categories) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<Attribute> attributes_;
    std::size_t cell_count_ = 0;
};

/// Age x gender x race x ethnicity, 80 cells.
inline const AttributeSchema& default_schema() {
    static const AttributeSchema schema{{
        {"age", {"0-17", "18-44", "45-64", "65+"}},
        {"gender", {"Female", "Male"}},
        {"race", {"AI/AN", "Asian", "Black", "NH/PI", "White"}},
        {"ethnicity", {"H/L", "NH/L"}},
    }};
    return schema;
}

namespace detail {

inline void check_probability_vector(std::span<const double> p, const char* what) {
    if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty probability vector");
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw std::invalid_argument(std::string(what) + ": negative or non-finite entry");
        }
        sum += x;
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        throw std::invalid_argument(std::string(what) + ": entries sum to " + std::to_string(sum));
    }
}

inline std::vector<double> normalized(std::vector<double> v, const char* what) {
    double sum = 0.0;
    for (double x : v) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw std::invalid_argument(std::string(what) + ": negative or non-finite entry");
        }
        sum += x;
    }
    if (!(sum > 0.0)) throw std::invalid_argument(std::string(what) + ": no probability mass");
    for (double& x : v) x /= sum;
    return v;
}

}  // namespace detail

/// One probability vector per schema attribute.
struct MarginalSet {
    std::vector<std::vector<double>> per_attribute;

    void validate(const AttributeSchema& schema) const {
        if (per_attribute.size() != schema.attribute_count()) {
            throw std::invalid_argument("marginal set has " + std::to_string(per_attribute.size()) +
                                        " attributes, schema has " +
                                        std::to_string(schema.attribute_count()));
        }
        for (std::size_t a = 0; a < per_attribute.size(); ++a) {
            if (per_attribute[a].size() != schema.category_count(a)) {
                throw std::invalid_argument("marginal for '" + schema.attributes()[a].name +
                                            "' has wrong category count");
            }
            detail::check_probability_vector(per_attribute[a], "marginal");
        }
    }
};

/// Probability vector over schema cells; validated on construction.
class JointDistribution {
public:
    JointDistribution() = default;

    explicit JointDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
        detail::check_probability_vector(probs_, "joint distribution");
    }

    /// Rescales nonnegative weights to sum to one.
    static JointDistribution normalize(std::vector<double> weights) {
        return JointDistribution(detail::normalized(std::move(weights), "joint distribution"));
    }

    static JointDistribution uniform(std::size_t cells) {
        return JointDistribution(std::vector<double>(cells, 1.0 / static_cast<double>(cells)));
    }

    [[nodiscard]] std::span<const double> probs() const noexcept { return probs_; }
    [[nodiscard]] const std::vector<double>& vector() const noexcept { return probs_; }
    [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return probs_[i]; }

    friend bool operator==(const JointDistribution&, const JointDistribution&) = default;

private:
    std::vector<double> probs_;
};

/// Integer recruit counts per cell.
class CohortCounts {
public:
    CohortCounts() = default;
    explicit CohortCounts(std::size_t cells) : counts_(cells, 0) {}

    void add(std::span<const std::int64_t> recruits) {
        if (recruits.size() != counts_.size()) {
            throw std::invalid_argument("recruit vector length does not match cohort");
        }
        for (std::size_t i = 0; i < recruits.size(); ++i) {
            if (recruits[i] < 0) throw std::invalid_argument("negative recruit count");
            counts_[i] += recruits[i];
            total_ += recruits[i];
        }
    }

    [[nodiscard]] std::span<const std::int64_t> counts() const noexcept { return counts_; }
    [[nodiscard]] std::int64_t total() const noexcept { return total_; }
    [[nodiscard]] std::size_t size() const noexcept { return counts_.size(); }

    [[nodiscard]] JointDistribution distribution() const {
        if (total_ == 0) throw std::logic_error("empty cohort has no distribution");
        std::vector<double> p(counts_.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = static_cast<double>(counts_[i]) / static_cast<double>(total_);
        }
        return JointDistribution::normalize(std::move(p));
    }

    friend bool operator==(const CohortCounts&, const CohortCounts&) = default;

private:
    std::vector<std::int64_t> counts_;
    std::int64_t total_ = 0;
};

/// Exponent-tilt parameters of a site's response drift. 1/1 is static.
struct DynamicsConfig {
    double shift = 1.0;  // time-driven exponent, applied every iteration
    double bias = 1.0;   // recruitment-driven exponent factor

    void validate() const {
        if (!(shift > 0.0) || !(bias > 0.0)) {
            throw std::invalid_argument("dynamics factors must be positive");
        }
    }
    friend bool operator==(const DynamicsConfig&, const DynamicsConfig&) = default;
};

struct SiteModel {
    std::string name;
    JointDistribution response;
    DynamicsConfig dynamics;
    double record_count = 0.0;  // effective records behind the distribution, 0 if unknown
};

}  // namespace cohort
