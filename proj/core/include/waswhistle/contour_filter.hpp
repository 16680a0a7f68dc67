#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/grid.hpp"

namespace waswhistle::filter {

struct FilterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FilterThresholds {
    double entropy_max = 70.0;   // keep when entropy strictly below
    double confidence = 0.5;     // a bin supports the contour when strictly above
    int support_min = 64;        // keep when support strictly above
    bool enabled = true;         // false: pass everything through (ablation)

    void validate() const;
};

// sum over bins of -p ln p, with 0 ln 0 := 0; throws on values outside [0,1]
double entropy_score(const ContourMask& mask);

// number of bins strictly above the confidence threshold
int support_count(const ContourMask& mask, double confidence);

struct FilterDecision {
    double entropy = 0.0;
    int support = 0;
    bool kept = false;
};

FilterDecision judge(const ContourMask& mask, const FilterThresholds& th);

// order-preserving subset of masks passing both criteria; `decisions`, when
// given, receives one entry per input mask for audit logging
std::vector<ContourMask> select(const std::vector<ContourMask>& masks,
                                const FilterThresholds& th,
                                std::vector<FilterDecision>* decisions = nullptr);

// one line per decision: index, entropy, support, kept/rejected
std::string decisions_tsv(const std::vector<FilterDecision>& decisions);

} // namespace waswhistle::filter
