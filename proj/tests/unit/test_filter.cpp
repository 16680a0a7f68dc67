#include "doctest.h"

#include <cmath>

#include "waswhistle/contour_filter.hpp"
#include "waswhistle/rng.hpp"

using namespace waswhistle;
using namespace waswhistle::filter;

namespace {

ContourMask uniform_mask(float v) {
    ContourMask m;
    for (auto& x : m.values.v) x = v;
    return m;
}

ContourMask binary_mask(int n_on) {
    ContourMask m;
    for (int i = 0; i < n_on; ++i) m.values.v[size_t(i) * 13 % m.values.v.size()] = 1.f;
    return m;
}

} // namespace

TEST_CASE("entropy score closed forms") {
    CHECK(entropy_score(uniform_mask(0.f)) == 0.0);
    CHECK(entropy_score(binary_mask(200)) == 0.0); // certainty has no entropy
    // all bins at 0.5: 4096 * (-0.5 ln 0.5)
    double expect = 4096.0 * (-0.5 * std::log(0.5));
    CHECK(entropy_score(uniform_mask(0.5f)) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(expect == doctest::Approx(1419.6).epsilon(1e-3));

    ContourMask bad = uniform_mask(0.5f);
    bad.values.v[0] = 1.5f;
    CHECK_THROWS_AS(entropy_score(bad), FilterError);
}

TEST_CASE("support count is a strict threshold") {
    CHECK(support_count(uniform_mask(0.f), 0.5) == 0);
    ContourMask m = uniform_mask(0.f);
    for (int i = 0; i < 100; ++i) m.values.v[i] = 0.9f;
    CHECK(support_count(m, 0.5) == 100);
    // bins exactly at the threshold do not count
    CHECK(support_count(uniform_mask(0.5f), 0.5) == 0);
    CHECK(support_count(uniform_mask(0.5f), 0.49) == 4096);
}

TEST_CASE("selection keeps crisp long contours and drops diffuse or short ones") {
    FilterThresholds th;
    std::vector<ContourMask> masks;
    masks.push_back(binary_mask(90));      // entropy 0, support 90 -> kept
    masks.push_back(uniform_mask(0.3f));   // entropy ~1479 -> rejected
    masks.push_back(binary_mask(40));      // support 40 <= 64 -> rejected
    masks.push_back(binary_mask(65));      // support 65 > 64 -> kept

    std::vector<FilterDecision> log;
    auto kept = select(masks, th, &log);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].values.v == masks[0].values.v);
    CHECK(kept[1].values.v == masks[3].values.v);
    REQUIRE(log.size() == 4);
    CHECK(log[1].entropy == doctest::Approx(4096.0 * -0.3 * std::log(0.3)).epsilon(1e-6));
    CHECK(!log[1].kept);
    CHECK(log[3].support == 65);

    auto tsv = decisions_tsv(log);
    CHECK(tsv.find("rejected") != std::string::npos);
    CHECK(tsv.find("kept") != std::string::npos);
}

TEST_CASE("support boundary: exactly at the minimum is rejected") {
    FilterThresholds th;
    auto kept = select({binary_mask(64)}, th);
    CHECK(kept.empty());
}

TEST_CASE("relaxing thresholds never shrinks the selection") {
    Rng rng(12);
    std::vector<ContourMask> masks;
    for (int i = 0; i < 200; ++i) {
        ContourMask m;
        int n_on = int(rng.uniform_int(150));
        float level = float(rng.uniform(0.4, 1.0));
        for (int j = 0; j < n_on; ++j)
            m.values.v[rng.uniform_int(m.values.v.size())] = level;
        masks.push_back(std::move(m));
    }
    FilterThresholds tight;
    tight.entropy_max = 30.0;
    tight.support_min = 80;
    FilterThresholds loose_e = tight;
    loose_e.entropy_max = 300.0;
    FilterThresholds loose_p = tight;
    loose_p.support_min = 20;

    auto n = [&](const FilterThresholds& th) { return select(masks, th).size(); };
    CHECK(n(loose_e) >= n(tight));
    CHECK(n(loose_p) >= n(tight));
}

TEST_CASE("selection distributes over concatenation") {
    std::vector<ContourMask> a = {binary_mask(90), uniform_mask(0.3f)};
    std::vector<ContourMask> b = {binary_mask(100)};
    std::vector<ContourMask> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    FilterThresholds th;
    auto ka = select(a, th), kb = select(b, th), kab = select(ab, th);
    REQUIRE(kab.size() == ka.size() + kb.size());
    for (size_t i = 0; i < ka.size(); ++i) CHECK(kab[i].values.v == ka[i].values.v);
    for (size_t i = 0; i < kb.size(); ++i)
        CHECK(kab[ka.size() + i].values.v == kb[i].values.v);
}

TEST_CASE("threshold validation") {
    FilterThresholds th;
    th.confidence = 1.0;
    CHECK_THROWS_AS(th.validate(), FilterError);
}
