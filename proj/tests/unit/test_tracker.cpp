#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "waswhistle/rng.hpp"
#include "waswhistle/tracker.hpp"

using namespace waswhistle;
using namespace waswhistle::tracker;

namespace {

// oracle: a plateau [i,j] is a peak iff its value beats the threshold and
// both neighbors outside the plateau (missing neighbors never beat it)
std::vector<int> peak_oracle(const std::vector<float>& col, double thr) {
    std::vector<int> out;
    const int n = int(col.size());
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && col[size_t(j + 1)] == col[size_t(i)]) ++j;
        bool left_ok = i == 0 || col[size_t(i - 1)] < col[size_t(i)];
        bool right_ok = j == n - 1 || col[size_t(j + 1)] < col[size_t(i)];
        if (col[size_t(i)] > thr && left_ok && right_ok) out.push_back(i);
        i = j + 1;
    }
    return out;
}

Grid ridge_map(int frames, int bins, const std::vector<std::pair<double, double>>& ridges,
               float value = 0.9f) {
    Grid g(frames, bins);
    for (int f = 0; f < frames; ++f)
        for (auto [b0, slope] : ridges) {
            int b = int(std::lround(b0 + slope * f));
            if (b >= 0 && b < bins) g.at(f, b) = value;
        }
    return g;
}

} // namespace

TEST_CASE("peak picking matches a brute-force oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<float> col(64);
        for (auto& v : col) v = std::round(rng.uniform() * 10.f) / 10.f; // plateau-rich
        auto got = pick_peaks(col, 0.5);
        auto want = peak_oracle(col, 0.5);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].bin == want[i]);
            CHECK(got[i].confidence == col[size_t(want[i])]);
        }
    }
}

TEST_CASE("peak picking handles plateaus, boundaries, and the threshold") {
    CHECK(pick_peaks({0.f, 0.8f, 0.8f, 0.8f, 0.f}, 0.5).size() == 1);
    CHECK(pick_peaks({0.f, 0.8f, 0.8f, 0.8f, 0.f}, 0.5)[0].bin == 1); // leftmost of plateau
    auto edge = pick_peaks({0.9f, 0.1f, 0.2f, 0.1f}, 0.5);
    REQUIRE(edge.size() == 1);
    CHECK(edge[0].bin == 0); // boundary neighbor counts as minus infinity
    CHECK(pick_peaks({0.4f, 0.49f, 0.4f}, 0.5).empty());
    CHECK(pick_peaks({0.5f, 0.5f, 0.5f}, 0.5).empty()); // strict threshold
    // raising the threshold never adds peaks
    Rng rng(405);
    std::vector<float> col(48);
    for (auto& v : col) v = rng.uniform();
    size_t prev = pick_peaks(col, 0.1).size();
    for (double t : {0.3, 0.5, 0.7, 0.9}) {
        size_t cur = pick_peaks(col, t).size();
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("far-off peaks start new graphs instead of stretching old ones") {
    dsp::SpectrogramCalib calib;
    TrackerParams p;
    std::vector<TonalGraph> graphs;
    extend_graphs(graphs, {{100, 0.9f}}, 0, p, calib);
    REQUIRE(graphs.size() == 1);
    // 125 Hz step: within the 250 Hz tolerance, extends the existing graph
    extend_graphs(graphs, {{101, 0.9f}}, 1, p, calib);
    CHECK(graphs.size() == 1);
    CHECK(graphs[0].nodes.size() == 2);
    // 6 kHz jump: outside the tolerance, a fresh graph
    extend_graphs(graphs, {{149, 0.9f}}, 2, p, calib);
    REQUIRE(graphs.size() == 2);
    CHECK(graphs[1].nodes[0].bin == 149);
    CHECK(graphs[0].nodes.size() == 2);
}

TEST_CASE("graphs close after the idle window and short ones are dropped") {
    dsp::SpectrogramCalib calib; // 2 ms frames -> close after 25 idle frames
    TrackerParams p;
    std::vector<TonalGraph> active, closed;
    extend_graphs(active, {{50, 0.9f}}, 0, p, calib);
    for (int f = 1; f <= 80; ++f) extend_graphs(active, {{50, 0.9f}}, f, p, calib);

    close_and_harvest(active, closed, 100, p, calib); // idle 20 frames: still open
    CHECK(active.size() == 1);
    CHECK(closed.empty());

    close_and_harvest(active, closed, 110, p, calib); // idle 30 frames: closes, 160 ms span
    CHECK(active.empty());
    REQUIRE(closed.size() == 1);

    // a 40 ms graph is discarded on close rather than harvested
    std::vector<TonalGraph> brief, harvested;
    for (int f = 0; f <= 20; ++f) extend_graphs(brief, {{10, 0.9f}}, f, p, calib);
    close_and_harvest(brief, harvested, 60, p, calib);
    CHECK(brief.empty());
    CHECK(harvested.empty());
}

TEST_CASE("a single chirp yields one trace that follows the ridge") {
    dsp::SpectrogramCalib calib;
    Grid conf = ridge_map(200, 361, {{50.0, 0.25}});
    auto traces = run_tracker(conf, calib);
    REQUIRE(traces.size() == 1);
    CHECK(traces[0].id == 1);
    CHECK(traces[0].duration_s() == doctest::Approx(0.398).epsilon(0.02));
    for (auto [t, f] : traces[0].points) {
        int frame = int(std::lround(t / calib.frame_period_s));
        double expect = calib.f0_hz + (50.0 + 0.25 * frame) * calib.bin_hz;
        CHECK(std::abs(f - expect) <= calib.bin_hz);
    }
}

TEST_CASE("parallel ridges produce one trace each; empty maps produce none") {
    dsp::SpectrogramCalib calib;
    auto traces = run_tracker(ridge_map(150, 361, {{60.0, 0.0}, {200.0, 0.1}}), calib);
    REQUIRE(traces.size() == 2);
    std::vector<double> starts = {traces[0].points[0].second, traces[1].points[0].second};
    std::sort(starts.begin(), starts.end());
    CHECK(starts[0] == doctest::Approx(calib.f0_hz + 60 * calib.bin_hz));
    CHECK(starts[1] == doctest::Approx(calib.f0_hz + 200 * calib.bin_hz));

    CHECK(run_tracker(Grid(150, 361), calib).empty());
}

TEST_CASE("traces below the minimum duration are rejected") {
    dsp::SpectrogramCalib calib;
    CHECK(run_tracker(ridge_map(60, 361, {{80.0, 0.0}}), calib).empty());  // 118 ms
    CHECK(run_tracker(ridge_map(80, 361, {{80.0, 0.0}}), calib).size() == 1); // 158 ms
}

TEST_CASE("short dropouts are bridged, long ones split the whistle") {
    dsp::SpectrogramCalib calib;
    auto gapped = [&](int gap) {
        Grid g(220 + gap, 361);
        for (int f = 0; f < 100; ++f) g.at(f, 90) = 0.9f;
        for (int f = 100 + gap; f < 220 + gap; ++f) g.at(f, 90) = 0.9f;
        return g;
    };
    CHECK(run_tracker(gapped(10), calib).size() == 1); // 20 ms gap, inside close window
    CHECK(run_tracker(gapped(40), calib).size() == 2); // 80 ms gap, graph closed meanwhile
}

TEST_CASE("crossing paths are split by slope continuity") {
    dsp::SpectrogramCalib calib;
    TrackerParams p;
    p.min_duration_ms = 10;

    // hand-built X: rising and falling chirps sharing the node at frame 10
    TonalGraph g;
    auto add = [&](int frame, int bin) {
        g.nodes.push_back({frame, bin, 0.9f, {}, {}});
        return int(g.nodes.size()) - 1;
    };
    auto link = [&](int a, int b) {
        g.nodes[size_t(a)].next.push_back(b);
        g.nodes[size_t(b)].prev.push_back(a);
    };
    std::vector<int> up, down;
    for (int f = 0; f < 10; ++f) up.push_back(add(f, f));        // bins 0..9
    for (int f = 0; f < 10; ++f) down.push_back(add(f, 20 - f)); // bins 20..11
    int cross = add(10, 10);
    link(up.back(), cross);
    link(down.back(), cross);
    int up_next = add(11, 11), down_next = add(11, 9);
    link(cross, up_next);
    link(cross, down_next);
    int u = up_next, d = down_next;
    for (int f = 12; f <= 20; ++f) {
        int nu = add(f, f), nd = add(f, 20 - f);
        link(u, nu);
        link(d, nd);
        u = nu;
        d = nd;
    }
    for (int i = 0; i < 9; ++i) link(up[size_t(i)], up[size_t(i + 1)]);
    for (int i = 0; i < 9; ++i) link(down[size_t(i)], down[size_t(i + 1)]);
    g.first_frame = 0;
    g.last_extended = 20;
    g.tips = {u, d};

    auto traces = disentangle(g, p, calib);
    REQUIRE(traces.size() == 2);
    for (const auto& tr : traces) {
        REQUIRE(tr.points.size() == 21);
        double step = tr.points[1].second - tr.points[0].second;
        for (size_t i = 1; i < tr.points.size(); ++i)
            CHECK(tr.points[i].second - tr.points[i - 1].second ==
                  doctest::Approx(step)); // monotone through the crossing
    }
}

TEST_CASE("well-separated random ridges are each recovered once") {
    dsp::SpectrogramCalib calib;
    Rng rng(406);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::pair<double, double>> ridges;
        for (int k = 0; k < 3; ++k)
            ridges.push_back({40.0 + 100.0 * k + rng.uniform() * 20.0,
                              (rng.uniform() - 0.5) * 0.3});
        Grid conf = ridge_map(150, 361, ridges);
        auto traces = run_tracker(conf, calib);
        REQUIRE(traces.size() == 3);
        std::vector<bool> claimed(3, false);
        for (const auto& tr : traces) {
            // every point within one bin of exactly one injected ridge
            int owner = -1;
            for (int k = 0; k < 3; ++k) {
                bool all = true;
                for (auto [t, f] : tr.points) {
                    int frame = int(std::lround(t / calib.frame_period_s));
                    double expect =
                        calib.f0_hz +
                        std::lround(ridges[size_t(k)].first + ridges[size_t(k)].second * frame) *
                            calib.bin_hz;
                    if (std::abs(f - expect) > calib.bin_hz) all = false;
                }
                if (all) owner = k;
            }
            REQUIRE(owner >= 0);
            CHECK(!claimed[size_t(owner)]);
            claimed[size_t(owner)] = true;
        }
    }
}

TEST_CASE("tracker parameters are validated") {
    dsp::SpectrogramCalib calib;
    TrackerParams p;
    p.extension_tolerance_hz = 60; // below one bin
    CHECK_THROWS_AS(run_tracker(Grid(10, 10), calib, p), TrackerError);
    TrackerParams q;
    q.min_duration_ms = 0;
    CHECK_THROWS_AS(run_tracker(Grid(10, 10), calib, q), TrackerError);
}
