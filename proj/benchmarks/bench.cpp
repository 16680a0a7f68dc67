// Micro-benchmarks for the hot paths: convolution, patch inference,
// spectrogram computation, skeleton thinning and ridge tracking.
#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "waswhistle/corpus.hpp"
#include "waswhistle/dsp.hpp"
#include "waswhistle/extractor.hpp"
#include "waswhistle/metrics.hpp"
#include "waswhistle/nn.hpp"
#include "waswhistle/rng.hpp"
#include "waswhistle/tracker.hpp"

using namespace waswhistle;

static nn::Tensor random_tensor(const nn::Shape& s, Rng& rng) {
    size_t n = 1;
    for (int d : s) n *= size_t(d);
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.uniform());
    return nn::Tensor::leaf(s, std::move(v));
}

static void BM_Conv2dForward(benchmark::State& state) {
    const int c = int(state.range(0));
    Rng rng(1);
    nn::Tensor x = random_tensor({8, c, 64, 64}, rng);
    nn::Tensor w = random_tensor({c, c, 3, 3}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, 1, 1).data().data());
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

static void BM_ConvBackward(benchmark::State& state) {
    const int c = int(state.range(0));
    Rng rng(2);
    nn::Tensor x = random_tensor({8, c, 64, 64}, rng);
    nn::Tensor w = nn::Tensor::leaf(
        {c, c, 3, 3}, std::vector<float>(size_t(c) * c * 9, 0.01f), true);
    for (auto _ : state) {
        nn::Tensor y = nn::sum(nn::conv2d(x, w, 1, 1));
        std::vector<nn::Tensor> leaves{w};
        benchmark::DoNotOptimize(nn::grad(y, leaves)[0].data().data());
    }
}
BENCHMARK(BM_ConvBackward)->Arg(8)->Arg(16);

static void BM_PatchInference(benchmark::State& state) {
    Rng rng(3);
    extractor::ExtractorNet net(int(state.range(0)), false, rng);
    Grid patch(64, 64);
    for (auto& v : patch.v) v = float(rng.uniform());
    for (auto _ : state) benchmark::DoNotOptimize(extractor::infer_patch(net, patch).v.data());
}
BENCHMARK(BM_PatchInference)->Arg(6)->Arg(12)->Arg(32);

static void BM_Spectrogram(benchmark::State& state) {
    dsp::Waveform w;
    w.sample_rate = 192000;
    w.samples.resize(size_t(w.sample_rate)); // one second
    Rng rng(4);
    for (size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = float(0.1 * rng.normal() +
                             0.2 * std::sin(2.0 * 3.14159265 * 20000.0 * double(i) / 192000.0));
    for (auto _ : state)
        benchmark::DoNotOptimize(dsp::compute_spectrogram(w).values.v.data());
}
BENCHMARK(BM_Spectrogram);

static void BM_Thinning(benchmark::State& state) {
    corpus::SynthesisParams p;
    p.seed = 5;
    auto rec = corpus::synth_recording(p, 0, 1500);
    Grid mask(rec.spec.num_frames(), rec.spec.num_bins());
    const auto c = dsp::calib_of(rec.spec);
    for (const auto& tr : rec.traces)
        for (const auto& [fr, bin] : dsp::rasterize_trace(tr, c, mask.rows))
            for (int d = -2; d <= 2; ++d)
                if (bin + d >= 0 && bin + d < mask.cols) mask.at(fr, bin + d) = 1.f;
    for (auto _ : state) benchmark::DoNotOptimize(metrics::thin_mask(mask).v.data());
}
BENCHMARK(BM_Thinning);

static void BM_Tracker(benchmark::State& state) {
    const dsp::SpectrogramCalib calib;
    Grid conf(1500, calib.num_bins);
    Rng rng(6);
    for (auto& v : conf.v) v = float(rng.uniform(0.0, 0.35));
    for (int k = 0; k < 4; ++k)
        for (int t = 0; t < 400; ++t) {
            int bin = 40 + 70 * k + int(std::lround(0.08 * t));
            conf.at(100 + t, bin) = 0.95f;
        }
    for (auto _ : state) {
        auto traces = tracker::run_tracker(conf, calib);
        benchmark::DoNotOptimize(traces.data());
    }
}
BENCHMARK(BM_Tracker);

BENCHMARK_MAIN();
