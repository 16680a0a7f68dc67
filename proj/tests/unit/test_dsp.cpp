#include "doctest.h"

#include <cmath>
#include <set>

#include "waswhistle/dsp.hpp"

using namespace waswhistle;
using namespace waswhistle::dsp;

namespace {

// direct double-precision Hamming-window DFT of one frame at one bin
double frame_dft_mag(const std::vector<float>& x, size_t start, int n, int k) {
    double re = 0, im = 0;
    for (int t = 0; t < n; ++t) {
        double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * t / (n - 1));
        double ph = 2.0 * M_PI * k * t / n;
        double s = w * x[start + t];
        re += s * std::cos(ph);
        im -= s * std::sin(ph);
    }
    return std::sqrt(re * re + im * im);
}

} // namespace

TEST_CASE("spectrogram of silence is zero") {
    Waveform w;
    w.samples.assign(192000, 0.f);
    auto s = compute_spectrogram(w);
    for (float v : s.values.v) CHECK(v == 0.f);
}

TEST_CASE("spectrogram geometry at defaults") {
    Waveform w;
    w.samples.assign(19200, 0.01f); // 100 ms at 192 kHz
    auto s = compute_spectrogram(w);
    // 8 ms frame = 1536 samples, 2 ms hop = 384: floor((19200-1536)/384)+1 = 47
    CHECK(s.num_frames() == 47);
    CHECK(s.num_bins() == 361); // 5..50 kHz at 125 Hz per bin, both edges
    CHECK(s.bin_hz == doctest::Approx(125.0));
    CHECK(s.f0_hz == doctest::Approx(5000.0));
    CHECK(s.frame_period_s == doctest::Approx(0.002));
}

TEST_CASE("pure tone lands on its bin with the windowed-DFT magnitude") {
    const int sr = 192000;
    Waveform w;
    w.sample_rate = sr;
    w.samples.resize(sr / 10);
    const double f = 20000.0; // bin 160 of the full DFT, column 120 in band
    for (size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = float(0.5 * std::sin(2.0 * M_PI * f * double(i) / sr));
    auto s = compute_spectrogram(w);

    // ridge column is the max of every frame
    for (int r = 0; r < s.num_frames(); ++r) {
        int arg = 0;
        for (int c = 1; c < s.num_bins(); ++c)
            if (s.values.at(r, c) > s.values.at(r, arg)) arg = c;
        CHECK(arg == 120);
    }

    // value oracle for frame 3: clip(log10 |DFT|, 0, 6) / 6
    const int n = 1536, hop = 384;
    double mag = frame_dft_mag(w.samples, size_t(3) * hop, n, 160);
    double expect = std::min(6.0, std::max(0.0, std::log10(mag))) / 6.0;
    CHECK(s.values.at(3, 120) == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("spectrogram error paths") {
    Waveform w;
    w.samples.assign(100, 0.f); // shorter than one frame
    CHECK_THROWS_WITH_AS(compute_spectrogram(w), doctest::Contains("insufficient samples"),
                         DspError);

    w.samples.assign(19200, 0.f);
    SpectrogramConfig cfg;
    cfg.band_high_hz = 200000.0; // above Nyquist
    CHECK_THROWS_WITH_AS(compute_spectrogram(w, cfg), doctest::Contains("band out of range"),
                         DspError);
}

TEST_CASE("freq_to_bin rounds half-bins up") {
    SpectrogramCalib c;
    CHECK(freq_to_bin(5000.0, c) == 0);
    CHECK(freq_to_bin(5062.0, c) == 0);
    CHECK(freq_to_bin(5062.5, c) == 1); // exact tie goes high
    CHECK(freq_to_bin(5063.0, c) == 1);
    CHECK(freq_to_bin(20000.0, c) == 120);
}

TEST_CASE("rasterize_trace matches per-frame interpolation") {
    SpectrogramCalib c;
    WhistleTrace t;
    t.points = {{0.010, 10000.0}, {0.030, 16000.0}};
    auto cells = rasterize_trace(t, c, 100);

    // oracle: for every frame whose center time lies in [start,end], the cell
    // is (frame, nearest bin of the linearly interpolated frequency)
    std::vector<std::pair<int, int>> expect;
    for (int fr = 0; fr < 100; ++fr) {
        double tt = fr * c.frame_period_s;
        if (tt < t.start_s() - 1e-12 || tt > t.end_s() + 1e-12) continue;
        expect.emplace_back(fr, freq_to_bin(t.freq_at(tt), c));
    }
    CHECK(cells == expect);

    // horizontal trace stays on one bin
    WhistleTrace h;
    h.points = {{0.0, 12500.0}, {0.1, 12500.0}};
    for (auto [fr, bin] : rasterize_trace(h, c, 100)) CHECK(bin == 60);
}

TEST_CASE("rasterize_contour aligns with the parent raster") {
    SpectrogramCalib c;
    WhistleTrace t;
    t.points = {{0.05, 9000.0}, {0.25, 21000.0}};
    const int of = 40, ob = 50; // patch window [40,104) x [50,114)
    auto m = rasterize_contour(t, of, ob, c, 1000);

    std::set<std::pair<int, int>> inside;
    for (auto [fr, bin] : rasterize_trace(t, c, 1000))
        if (fr >= of && fr < of + kPatchSize && bin >= ob && bin < ob + kPatchSize)
            inside.insert({fr - of, bin - ob});
    CHECK(!inside.empty());
    for (int r = 0; r < kPatchSize; ++r)
        for (int col = 0; col < kPatchSize; ++col)
            CHECK(m.values.at(r, col) == (inside.count({r, col}) ? 1.f : 0.f));

    // a trace far away yields an all-zero mask
    auto z = rasterize_contour(t, 900, 200, c, 1000);
    for (float v : z.values.v) CHECK(v == 0.f);
}

TEST_CASE("extract_patches against a brute-force occupancy oracle") {
    NormalizedSpectrogram s;
    s.values = Grid(300, 361, 0.3f);
    WhistleTrace t;
    t.points = {{0.1, 12000.0}, {0.4, 30000.0}};
    std::vector<WhistleTrace> ann = {t};

    auto ps = extract_patches(s, ann, 25, 40, 77);
    CHECK(ps.negatives.size() == 40);
    CHECK(!ps.positives.empty());

    // oracle occupancy: the set of cells any trace crosses
    std::set<std::pair<int, int>> occ;
    for (auto [fr, bin] : rasterize_trace(t, calib_of(s), s.num_frames())) occ.insert({fr, bin});
    auto window_has_whistle = [&](int of, int ob) {
        for (auto& [fr, bin] : occ)
            if (fr >= of && fr < of + kPatchSize && bin >= ob && bin < ob + kPatchSize)
                return true;
        return false;
    };

    std::set<std::pair<int, int>> pos_origins;
    for (auto& [p, m] : ps.positives) {
        CHECK(window_has_whistle(p.origin_frame, p.origin_bin));
        CHECK(p.polarity == Polarity::positive);
        pos_origins.insert({p.origin_frame, p.origin_bin});
        // mask matches an independent rasterization
        auto om = rasterize_contour(t, p.origin_frame, p.origin_bin, calib_of(s), s.num_frames());
        CHECK(m.values.v == om.values.v);
        // patch pixels match the source
        for (int r = 0; r < kPatchSize; ++r)
            for (int c2 = 0; c2 < kPatchSize; ++c2)
                CHECK(p.values.at(r, c2) == s.values.at(p.origin_frame + r, p.origin_bin + c2));
    }
    CHECK(pos_origins.size() == ps.positives.size()); // tiling never repeats

    std::set<std::pair<int, int>> neg_origins;
    for (auto& p : ps.negatives) {
        CHECK(!window_has_whistle(p.origin_frame, p.origin_bin));
        CHECK(p.origin_frame + kPatchSize <= s.num_frames());
        CHECK(p.origin_bin + kPatchSize <= s.num_bins());
        neg_origins.insert({p.origin_frame, p.origin_bin});
    }
    CHECK(neg_origins.size() == ps.negatives.size()); // without replacement

    // determinism
    auto ps2 = extract_patches(s, ann, 25, 40, 77);
    REQUIRE(ps2.negatives.size() == ps.negatives.size());
    for (size_t i = 0; i < ps.negatives.size(); ++i) {
        CHECK(ps2.negatives[i].origin_frame == ps.negatives[i].origin_frame);
        CHECK(ps2.negatives[i].origin_bin == ps.negatives[i].origin_bin);
    }

    // asking for more negatives than exist is an error
    CHECK_THROWS_WITH_AS(extract_patches(s, ann, 25, 1000000, 1),
                         doctest::Contains("whistle-free patch positions"), DspError);
}
