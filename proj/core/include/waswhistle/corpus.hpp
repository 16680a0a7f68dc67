#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/dsp.hpp"
#include "waswhistle/grid.hpp"
#include "waswhistle/rng.hpp"

namespace waswhistle::corpus {

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SynthesisParams {
    int n_whistles = 6;              // per synthesized recording
    int fm_poly_degree_min = 1;
    int fm_poly_degree_max = 3;
    double duration_min_s = 0.05;
    double duration_max_s = 1.0;
    double snr_min_db = 5.0;
    double snr_max_db = 25.0;
    double harmonic_prob = 0.15;
    double undulation_prob = 0.4;
    double click_rate_hz = 2.0;      // broadband transient rate
    double noise_color = 0.15;       // spectral slope of the noise floor
    uint64_t seed = 0;

    void validate() const;
};

struct Corpus {
    std::vector<std::pair<Patch, ContourMask>> positives;
    std::vector<Patch> negatives;
    std::vector<WhistleTrace> traces;
    std::vector<double> trace_snr_db; // parallel to traces
    std::string split = "train";
};

// One synthesized recording: spectrogram plus exact ground truth.
struct Recording {
    NormalizedSpectrogram spec;
    std::vector<WhistleTrace> traces;
    std::vector<double> snr_db;
};

// Colored-noise field with Poisson click transients, values in [0,1].
NormalizedSpectrogram synth_background(const SynthesisParams& params, int n_frames, Rng& rng);

// Random polynomial frequency trajectory (times start at 0), clipped to band.
WhistleTrace synth_whistle_trace(const SynthesisParams& params, Rng& rng);

// Add a Gaussian-profile ridge along the trace so that ridge peak minus the
// local median is ~snr_db on the 0..120 dB scale; result re-clipped to [0,1].
void inject_whistle(NormalizedSpectrogram& s, const WhistleTrace& trace, double snr_db);

// SNR estimator shared with the evaluator: value at (frame,bin) in dB minus
// the median of the 32-bin frequency neighborhood (crest +-3 bins excluded).
double point_snr_db(const NormalizedSpectrogram& s, int frame, int bin);
// Mean point SNR along a trace's rasterized crest.
double measure_trace_snr_db(const NormalizedSpectrogram& s, const WhistleTrace& trace);

// Deterministic recording #index of the stream defined by params.seed.
Recording synth_recording(const SynthesisParams& params, int index, int n_frames = 2000);

// Accumulates recordings until both counts are reached, then truncates, so a
// smaller corpus with the same seed is a prefix of a larger one.
Corpus build_corpus(const SynthesisParams& params, int n_pos, int n_neg);

// Archive: manifest.txt + stacked-patch WSPC files + annotation TSV.
void save_corpus(const std::string& dir, const Corpus& c, const SynthesisParams& params,
                 bool generated = false);
Corpus load_corpus(const std::string& dir);

} // namespace waswhistle::corpus
