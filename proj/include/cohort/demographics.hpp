#pragma once

#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cohort/schema.hpp"

namespace cohort {

/// Product of marginals under attribute independence.
inline JointDistribution joint_from_marginals(const AttributeSchema& schema, const MarginalSet& m) {
    m.validate(schema);
    std::vector<double> probs(schema.cell_count());
    for (std::size_t cell = 0; cell < probs.size(); ++cell) {
        double p = 1.0;
        for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
            p *= m.per_attribute[a][schema.category_of(cell, a)];
        }
        probs[cell] = p;
    }
    return JointDistribution::normalize(std::move(probs));
}

inline std::vector<double> marginal_of(const AttributeSchema& schema, std::span<const double> joint,
                                       std::size_t attribute) {
    std::vector<double> out(schema.category_count(attribute), 0.0);
    for (std::size_t cell = 0; cell < joint.size(); ++cell) {
        out[schema.category_of(cell, attribute)] += joint[cell];
    }
    return out;
}

inline MarginalSet marginals_of_joint(const AttributeSchema& schema, const JointDistribution& j) {
    if (j.size() != schema.cell_count()) {
        throw std::invalid_argument("joint distribution does not match schema cell count");
    }
    MarginalSet m;
    m.per_attribute.reserve(schema.attribute_count());
    for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
        m.per_attribute.push_back(marginal_of(schema, j.probs(), a));
    }
    return m;
}

/// Largest allowed deviation of a converted ratio row's raw sum from 1.
inline constexpr double kRatioSumTolerance = 0.02;

struct RatioConversion {
    MarginalSet marginals;                 // renormalized
    std::vector<double> raw_attribute_sums;  // before renormalization
};

/// Converts signed representation ratios against `census` into site marginals.
/// A ratio r > 0 scales the census share by r; r < 0 divides it by |r|.
inline RatioConversion ratio_table_to_marginals(const AttributeSchema& schema, const MarginalSet& census,
                                                const std::vector<std::vector<double>>& ratios) {
    census.validate(schema);
    if (ratios.size() != schema.attribute_count()) {
        throw std::invalid_argument("ratio set does not match schema attribute count");
    }
    RatioConversion out;
    for (std::size_t a = 0; a < ratios.size(); ++a) {
        const auto& attr = schema.attributes()[a];
        if (ratios[a].size() != attr.categories.size()) {
            throw std::invalid_argument("ratio row for '" + attr.name + "' has wrong length");
        }
        std::vector<double> v(ratios[a].size());
        double sum = 0.0;
        for (std::size_t c = 0; c < v.size(); ++c) {
            const double r = ratios[a][c];
            if (r == 0.0 || !std::isfinite(r)) {
                throw std::invalid_argument("invalid ratio for " + attr.name + "/" + attr.categories[c]);
            }
            v[c] = r > 0.0 ? census.per_attribute[a][c] * r : census.per_attribute[a][c] / -r;
            sum += v[c];
        }
        if (std::abs(sum - 1.0) > kRatioSumTolerance) {
            throw std::invalid_argument("converted '" + attr.name + "' proportions sum to " +
                                        std::to_string(sum) + "; check the ratio transcription");
        }
        out.raw_attribute_sums.push_back(sum);
        for (double& x : v) x /= sum;
        out.marginals.per_attribute.push_back(std::move(v));
    }
    return out;
}

inline const std::set<std::string>& default_excluded_labels() {
    static const std::set<std::string> labels{"No Information", "Unknown", "Ambiguous",
                                              "Refuse to answer", "Other"};
    return labels;
}

/// Drops excluded labels and normalizes the remaining counts. Output follows
/// the key order of `raw`.
inline std::vector<double> clean_counts_to_distribution(
    const std::vector<std::pair<std::string, double>>& raw,
    const std::set<std::string>& excluded = default_excluded_labels()) {
    std::vector<double> out;
    double total = 0.0;
    for (const auto& [label, count] : raw) {
        if (count < 0.0) throw std::invalid_argument("negative count for '" + label + "'");
        if (excluded.contains(label)) continue;
        out.push_back(count);
        total += count;
    }
    if (!(total > 0.0)) throw std::invalid_argument("all mass falls in excluded categories");
    for (double& x : out) x /= total;
    return out;
}

/// Share of the 15-19 bin that goes to the 0-17 output bin; the rest goes to 18-44.
inline constexpr double kTeenSplitToMinors = 0.6;

/// Aggregates 5-year age bins (0-4, 5-9, ..., 80-84, 85+) into the four
/// output bins. Returns unnormalized mass.
inline std::vector<double> redistribute_age_bin(std::span<const double> five_year_bins) {
    constexpr std::size_t kBins = 18;
    if (five_year_bins.size() != kBins) {
        throw std::invalid_argument("expected 18 five-year age bins (0-4 through 85+)");
    }
    std::vector<double> out(4, 0.0);
    for (std::size_t b = 0; b < kBins; ++b) {
        const double mass = five_year_bins[b];
        if (mass < 0.0) throw std::invalid_argument("negative age-bin count");
        const std::size_t lower = 5 * b;
        if (lower == 15) {
            out[0] += kTeenSplitToMinors * mass;
            out[1] += (1.0 - kTeenSplitToMinors) * mass;
        } else if (lower < 15) {
            out[0] += mass;
        } else if (lower < 45) {
            out[1] += mass;
        } else if (lower < 65) {
            out[2] += mass;
        } else {
            out[3] += mass;
        }
    }
    return out;
}

/// Reweights a demographic distribution by per-cell participation rates.
inline JointDistribution apply_participation_rates(const JointDistribution& demographic,
                                                   std::span<const double> rates) {
    if (rates.size() != demographic.size()) {
        throw std::invalid_argument("participation rates do not match distribution length");
    }
    std::vector<double> w(rates.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(rates[i] > 0.0)) throw std::invalid_argument("participation rates must be positive");
        w[i] = demographic[i] * rates[i];
        sum += w[i];
    }
    if (!(sum > 0.0)) throw std::invalid_argument("participation-weighted distribution is all zero");
    return JointDistribution::normalize(std::move(w));
}

// ---------------------------------------------------------------------------
// Ratio table CSV

/// Census column plus one signed-ratio column per site, in schema layout.
struct RatioTable {
    std::vector<std::string> site_names;
    MarginalSet census;
    std::vector<std::vector<std::vector<double>>> site_ratios;  // [site][attribute][category]
    std::map<std::string, std::vector<double>> meta;           // per-site metadata rows
    std::map<std::string, double> census_meta;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            out.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell.push_back(ch);
        }
    }
    out.push_back(cell);
    for (auto& c : out) {
        const auto b = c.find_first_not_of(" \t");
        const auto e = c.find_last_not_of(" \t");
        c = b == std::string::npos ? std::string{} : c.substr(b, e - b + 1);
    }
    return out;
}

inline double parse_number(const std::string& text, std::size_t row, std::size_t col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("row " + std::to_string(row) + ", column " + std::to_string(col) +
                                    ": not a number: '" + text + "'");
    }
}

}  // namespace detail

/// Parses the site ratio CSV. Lines starting with '#' are comments. Header:
/// attribute,category,<census>,<site>... Rows with attribute "meta" carry
/// per-column scalars (count, missing, mkld).
inline RatioTable parse_ratio_table(std::istream& in, const AttributeSchema& schema) {
    RatioTable table;
    std::string line;
    std::size_t row = 0;
    std::vector<std::string> header;
    std::vector<std::vector<std::vector<double>>> cells;  // [column][attribute][category]
    std::vector<std::vector<std::vector<bool>>> seen;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto fields = detail::split_csv_line(line);
        if (header.empty()) {
            if (fields.size() < 3 || fields[0] != "attribute" || fields[1] != "category") {
                throw std::invalid_argument("row " + std::to_string(row) +
                                            ": expected header 'attribute,category,<census>,<sites>...'");
            }
            header = fields;
            table.site_names.assign(header.begin() + 3, header.end());
            const std::size_t columns = header.size() - 2;
            cells.assign(columns, {});
            seen.assign(columns, {});
            for (std::size_t c = 0; c < columns; ++c) {
                for (const auto& attr : schema.attributes()) {
                    cells[c].emplace_back(attr.categories.size(), 0.0);
                    seen[c].emplace_back(attr.categories.size(), false);
                }
            }
            continue;
        }
        if (fields.size() != header.size()) {
            throw std::invalid_argument("row " + std::to_string(row) + ": expected " +
                                        std::to_string(header.size()) + " columns, found " +
                                        std::to_string(fields.size()));
        }
        if (fields[0] == "meta") {
            std::vector<double> values;
            for (std::size_t c = 3; c < fields.size(); ++c) {
                values.push_back(detail::parse_number(fields[c], row, c + 1));
            }
            table.census_meta[fields[1]] = detail::parse_number(fields[2], row, 3);
            table.meta[fields[1]] = std::move(values);
            continue;
        }
        std::size_t a = 0;
        std::size_t k = 0;
        try {
            a = schema.attribute_index(fields[0]);
            k = schema.category_index(a, fields[1]);
        } catch (const std::out_of_range& e) {
            throw std::invalid_argument("row " + std::to_string(row) + ": " + e.what());
        }
        for (std::size_t c = 2; c < fields.size(); ++c) {
            const double v = detail::parse_number(fields[c], row, c + 1);
            if (c > 2 && v == 0.0) {
                throw std::invalid_argument("row " + std::to_string(row) + ", column " +
                                            std::to_string(c + 1) + " (" + header[c] + ", " +
                                            fields[0] + "/" + fields[1] + "): ratio of 0");
            }
            if (seen[c - 2][a][k]) {
                throw std::invalid_argument("row " + std::to_string(row) + ": duplicate cell " +
                                            fields[0] + "/" + fields[1]);
            }
            cells[c - 2][a][k] = v;
            seen[c - 2][a][k] = true;
        }
    }
    if (header.empty()) throw std::invalid_argument("ratio table has no header row");
    for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
        for (std::size_t k = 0; k < schema.category_count(a); ++k) {
            if (!seen[0][a][k]) {
                throw std::invalid_argument("ratio table is missing row " + schema.attributes()[a].name +
                                            "/" + schema.attributes()[a].categories[k]);
            }
        }
    }
    table.census.per_attribute = cells[0];
    for (auto& v : table.census.per_attribute) v = detail::normalized(std::move(v), "census marginal");
    table.site_ratios.assign(cells.begin() + 1, cells.end());
    return table;
}

struct SiteData {
    std::vector<SiteModel> sites;
    JointDistribution target;
    std::vector<std::vector<double>> raw_attribute_sums;  // per site
};

/// Builds site joints (independence) and the census target from a ratio table.
inline SiteData build_sites(const AttributeSchema& schema, const RatioTable& table) {
    SiteData out;
    out.target = joint_from_marginals(schema, table.census);
    const auto counts = table.meta.find("count");
    const auto missing = table.meta.find("missing");
    for (std::size_t s = 0; s < table.site_names.size(); ++s) {
        RatioConversion conv;
        try {
            conv = ratio_table_to_marginals(schema, table.census, table.site_ratios[s]);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("site '" + table.site_names[s] + "': " + e.what());
        }
        SiteModel site;
        site.name = table.site_names[s];
        site.response = joint_from_marginals(schema, conv.marginals);
        if (counts != table.meta.end()) {
            const double miss = missing != table.meta.end() ? missing->second[s] : 0.0;
            site.record_count = counts->second[s] * (1.0 - miss);
        }
        out.raw_attribute_sums.push_back(std::move(conv.raw_attribute_sums));
        out.sites.push_back(std::move(site));
    }
    return out;
}

}  // namespace cohort
