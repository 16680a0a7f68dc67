#include <cmath>

#include "doctest.h"
#include "waswhistle/corpus.hpp"
#include "waswhistle/metrics.hpp"

using namespace waswhistle;
using namespace waswhistle::metrics;

namespace {

int count_on(const Grid& g) {
    int n = 0;
    for (float v : g.v)
        if (v > 0.5f) ++n;
    return n;
}

WhistleTrace make_trace(double t0, double t1, double f0, double f1, const std::string& sp = "a") {
    WhistleTrace tr;
    tr.species = sp;
    for (int i = 0; i <= 20; ++i) {
        double u = i / 20.0;
        tr.points.emplace_back(t0 + u * (t1 - t0), f0 + u * (f1 - f0));
    }
    return tr;
}

} // namespace

TEST_CASE("thinning reduces a thick bar to a single-pixel line") {
    Grid g(20, 20);
    for (int r = 5; r <= 7; ++r) // 3-pixel-thick horizontal bar
        for (int c = 2; c <= 17; ++c) g.at(r, c) = 1.f;
    Grid t = thin_mask(g);
    // every surviving pixel came from the bar; no column keeps more than one,
    // and the interior (endpoints may erode) keeps exactly one
    for (int c = 0; c < 20; ++c) {
        int col_on = 0;
        for (int r = 0; r < 20; ++r)
            if (t.at(r, c) > 0.5f) {
                ++col_on;
                CHECK(r >= 5);
                CHECK(r <= 7);
            }
        CHECK(col_on <= 1);
        if (c >= 4 && c <= 15) CHECK(col_on == 1);
    }
    // idempotent and empty-safe
    Grid t2 = thin_mask(t);
    for (size_t i = 0; i < t.v.size(); ++i) CHECK(t2.v[i] == t.v[i]);
    CHECK(count_on(thin_mask(Grid(16, 16))) == 0);
    // an already-thin diagonal survives
    Grid d(16, 16);
    for (int i = 2; i < 14; ++i) d.at(i, i) = 1.f;
    CHECK(count_on(thin_mask(d)) == 12);
}

TEST_CASE("pixelwise F1 follows a hand-checked matching") {
    Grid gt(8, 8), pred(8, 8);
    gt.at(2, 2) = 1.f;
    gt.at(5, 5) = 1.f;
    pred.at(2, 3) = 0.9f; // Chebyshev distance 1: a hit
    pred.at(5, 5) = 0.9f; // exact hit
    pred.at(0, 7) = 0.9f; // far from everything: false positive
    Prf r = f1_at_threshold({pred}, {thin_mask(gt)}, 0.5);
    CHECK(r.tp == 2);
    CHECK(r.fp == 1);
    CHECK(r.fn == 0);
    CHECK(r.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r.recall == doctest::Approx(1.0));
    CHECK(r.f1 == doctest::Approx(0.8));

    // matching is one-to-one: two predictions cannot share one truth pixel
    Grid p2(8, 8);
    p2.at(2, 2) = 0.9f;
    p2.at(2, 3) = 0.9f;
    Grid g2(8, 8);
    g2.at(2, 2) = 1.f;
    Prf r2 = f1_at_threshold({p2}, {thin_mask(g2)}, 0.5);
    CHECK(r2.tp == 1);
    CHECK(r2.fp == 1);
    CHECK(r2.fn == 0);

    // distance beyond d_max never matches
    Grid p3(8, 8);
    p3.at(2, 6) = 0.9f;
    Prf r3 = f1_at_threshold({p3}, {thin_mask(g2)}, 0.5);
    CHECK(r3.tp == 0);
    CHECK(r3.fp == 1);
    CHECK(r3.fn == 1);
}

TEST_CASE("best-threshold F1 has the expected invariances") {
    Rng rng(607);
    Grid gt(64, 64);
    for (int i = 4; i < 60; ++i) gt.at(i, i) = 1.f;
    Grid perfect = gt;
    for (auto& v : perfect.v) v = v > 0.5f ? 0.95f : 0.01f;
    CHECK(ods({perfect}, {gt}) == doctest::Approx(1.0));

    // scaling all confidences by 0.6 leaves the best threshold's F1 intact
    Grid noisy(64, 64);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) noisy.at(r, c) = gt.at(r, c) > 0.5f ? 0.9f : rng.uniform() * 0.4f;
    Grid scaled = noisy;
    for (auto& v : scaled.v) v *= 0.6f;
    double a = ods({noisy}, {gt});
    double b = ods({scaled}, {gt});
    CHECK(a == doctest::Approx(b).epsilon(1e-6));

    // the sweep dominates any single interior threshold
    std::vector<Grid> thinned = {thin_mask(gt)};
    for (double t : {0.1, 0.3, 0.5, 0.7})
        CHECK(ods({noisy}, {gt}) >= f1_at_threshold({noisy}, thinned, t).f1 - 1e-12);
}

TEST_CASE("ground-truth gating checks duration and signal strength") {
    NormalizedSpectrogram s;
    s.values = Grid(500, 361);
    for (auto& v : s.values.v) v = 0.05f; // quiet floor
    MatchCriteria c;

    // strong trace over a quiet floor: valid
    WhistleTrace strong = make_trace(0.1, 0.4, 10000, 11000);
    for (auto [t, f] : strong.points) {
        int frame = int(std::lround(t / s.frame_period_s));
        int bin = dsp::freq_to_bin(f, dsp::calib_of(s));
        s.values.at(frame, bin) = 0.9f;
    }
    CHECK(validate_ground_truth(strong, s, c));

    // long enough but buried in the floor: rejected by the SNR fraction
    WhistleTrace faint = make_trace(0.5, 0.8, 20000, 20000);
    CHECK_FALSE(validate_ground_truth(faint, s, c));

    // loud but only 100 ms: rejected by duration
    WhistleTrace brief = make_trace(0.1, 0.2, 10000, 10500);
    CHECK_FALSE(validate_ground_truth(brief, s, c));
}

TEST_CASE("whistle matching applies the frequency-deviation gate") {
    MatchCriteria c;
    std::vector<WhistleTrace> gts = {make_trace(0.0, 0.5, 10000, 12000)};
    std::vector<bool> valid = {true};

    // 100 Hz off everywhere: a match
    auto close_det = make_trace(0.0, 0.5, 10100, 12100);
    MatchCounts m = match_detections({close_det}, gts, valid, c);
    CHECK(m.matched == 1);
    CHECK(m.matched_gt == 1);
    CHECK(m.false_positive == 0);
    CHECK(m.valid_gt == 1);

    // 400 Hz off: overlaps but fails the 350 Hz gate
    auto far_det = make_trace(0.0, 0.5, 10400, 12400);
    m = match_detections({far_det}, gts, valid, c);
    CHECK(m.matched == 0);
    CHECK(m.false_positive == 1);

    // disjoint in time: false positive
    auto late_det = make_trace(1.0, 1.5, 10000, 12000);
    m = match_detections({late_det}, gts, valid, c);
    CHECK(m.false_positive == 1);

    // a detection whose best match is an invalid truth disappears from counts
    m = match_detections({close_det}, gts, {false}, c);
    CHECK(m.matched == 0);
    CHECK(m.false_positive == 0);
    CHECK(m.valid_gt == 0);
    CHECK(m.discarded_gt == 1);

    // two detections on one truth: both count as matched detections, one truth
    m = match_detections({close_det, close_det}, gts, valid, c);
    CHECK(m.matched == 2);
    CHECK(m.matched_gt == 1);
}

TEST_CASE("evaluation averages species scores without weighting") {
    MatchCriteria c;
    RecordingEval rec;
    rec.ground_truth = {make_trace(0.0, 0.5, 10000, 12000, "common"),
                        make_trace(1.0, 1.5, 20000, 21000, "common"),
                        make_trace(2.0, 2.5, 30000, 30000, "spinner")};
    rec.detections = {make_trace(0.0, 0.5, 10050, 12050, ""),  // hits common #1
                      make_trace(2.0, 2.5, 30100, 30100, ""),  // hits spinner
                      make_trace(4.0, 4.5, 15000, 15000, "")}; // false positive

    EvalReport rep = evaluate({rec}, c);
    REQUIRE(rep.per_species.size() == 2);
    const auto& common = rep.per_species[0].species == "common" ? rep.per_species[0]
                                                                : rep.per_species[1];
    const auto& spinner = rep.per_species[0].species == "spinner" ? rep.per_species[0]
                                                                  : rep.per_species[1];
    CHECK(common.recall == doctest::Approx(0.5));
    CHECK(common.precision == doctest::Approx(0.5)); // FP lands on the dominant species
    CHECK(spinner.recall == doctest::Approx(1.0));
    CHECK(spinner.precision == doctest::Approx(1.0));
    CHECK(rep.mean_recall == doctest::Approx(0.75));
    CHECK(rep.mean_f1 == doctest::Approx((0.5 + 1.0) / 2.0));

    // deterministic, and both renderings carry every species row
    EvalReport again = evaluate({rec}, c);
    CHECK(again.tsv() == rep.tsv());
    CHECK(rep.tsv().find("common") != std::string::npos);
    CHECK(rep.tsv().find("spinner") != std::string::npos);
    CHECK(rep.table().find("mean") != std::string::npos);

    MatchCriteria bad;
    bad.min_snr_fraction = 0;
    CHECK_THROWS_AS(evaluate({rec}, bad), MetricsError);
}
