#pragma once

#include <fstream>

#include "cohort/demographics.hpp"

namespace testing_support {

inline cohort::RatioTable star_table() {
    std::ifstream in(COHORT_DATA_DIR "/star_table2.csv");
    return cohort::parse_ratio_table(in, cohort::default_schema());
}

inline const cohort::SiteData& star_sites() {
    static const cohort::SiteData data = cohort::build_sites(cohort::default_schema(), star_table());
    return data;
}

/// Two-attribute, four-cell schema for hand-checkable cases.
inline const cohort::AttributeSchema& toy_schema() {
    static const cohort::AttributeSchema s{{{"a", {"a0", "a1"}}, {"b", {"b0", "b1"}}}};
    return s;
}

/// Single-attribute schema with `k` categories, so joints equal marginals.
inline cohort::AttributeSchema flat_schema(std::size_t k) {
    std::vector<std::string> cats;
    for (std::size_t i = 0; i < k; ++i) cats.push_back("c" + std::to_string(i));
    return cohort::AttributeSchema{{{"x", cats}}};
}

inline cohort::SiteModel site(std::string name, std::vector<double> p) {
    return cohort::SiteModel{std::move(name), cohort::JointDistribution(std::move(p)), {}, 0.0};
}

}  // namespace testing_support
