#include "waswhistle/contour_filter.hpp"

#include <cmath>
#include <sstream>

namespace waswhistle::filter {

void FilterThresholds::validate() const {
    if (entropy_max <= 0 || confidence <= 0 || confidence >= 1 || support_min < 0)
        throw FilterError("invalid filter thresholds");
}

double entropy_score(const ContourMask& mask) {
    double s = 0.0;
    for (float v : mask.values.v) {
        if (v < 0.f || v > 1.f) throw FilterError("mask value outside [0,1]");
        if (v > 0.f) s -= double(v) * std::log(double(v));
    }
    return s;
}

int support_count(const ContourMask& mask, double confidence) {
    int n = 0;
    for (float v : mask.values.v)
        if (double(v) > confidence) ++n;
    return n;
}

FilterDecision judge(const ContourMask& mask, const FilterThresholds& th) {
    FilterDecision d;
    d.entropy = entropy_score(mask);
    d.support = support_count(mask, th.confidence);
    d.kept = !th.enabled || (d.entropy < th.entropy_max && d.support > th.support_min);
    return d;
}

std::vector<ContourMask> select(const std::vector<ContourMask>& masks,
                                const FilterThresholds& th,
                                std::vector<FilterDecision>* decisions) {
    th.validate();
    std::vector<ContourMask> kept;
    for (const auto& m : masks) {
        FilterDecision d = judge(m, th);
        if (d.kept) kept.push_back(m);
        if (decisions) decisions->push_back(d);
    }
    return kept;
}

std::string decisions_tsv(const std::vector<FilterDecision>& decisions) {
    std::ostringstream os;
    os << "index\tentropy\tsupport\tdecision\n";
    for (size_t i = 0; i < decisions.size(); ++i)
        os << i << '\t' << decisions[i].entropy << '\t' << decisions[i].support << '\t'
           << (decisions[i].kept ? "kept" : "rejected") << '\n';
    return os.str();
}

} // namespace waswhistle::filter
