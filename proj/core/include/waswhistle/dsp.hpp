#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/grid.hpp"

namespace waswhistle::dsp {

struct DspError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Waveform {
    std::vector<float> samples;   // normalized amplitude
    int sample_rate = 192000;     // Hz
};

// Minimal PCM WAV loader (16-bit and 32-bit float, first channel).
Waveform load_wav(const std::string& path);

struct SpectrogramConfig {
    double frame_len_ms = 8.0;
    double hop_ms = 2.0;
    double band_low_hz = 5000.0;
    double band_high_hz = 50000.0;
    double clip_lo = 0.0;
    double clip_hi = 6.0;

    int frame_samples(int sample_rate) const;
    int hop_samples(int sample_rate) const;
    double bin_hz() const { return 1000.0 / frame_len_ms; }
    int band_bins() const; // inclusive of both band edges
};

// Log10-magnitude Hamming-window spectrogram, clipped to [clip_lo, clip_hi]
// and scaled into [0,1]; only bins inside [band_low, band_high] retained.
NormalizedSpectrogram compute_spectrogram(const Waveform& w, const SpectrogramConfig& cfg = {});

// Calibration used to map (time_s, freq_hz) polylines into grid coordinates.
struct SpectrogramCalib {
    double frame_period_s = 0.002;
    double bin_hz = 125.0;
    double f0_hz = 5000.0;
    int num_bins = 361;
};
SpectrogramCalib calib_of(const NormalizedSpectrogram& s);

// Round frequency to the nearest bin; exact half-bin ties go to the higher bin.
int freq_to_bin(double freq_hz, const SpectrogramCalib& c);

// Full-spectrogram rasterization: every (frame, bin) cell the interpolated
// polyline crosses, one bin per frame.
std::vector<std::pair<int, int>> rasterize_trace(const WhistleTrace& trace,
                                                 const SpectrogramCalib& c,
                                                 int num_frames);

// 64x64 mask for the patch at (origin_frame, origin_bin). A trace entirely
// outside the patch yields an all-zero mask.
ContourMask rasterize_contour(const WhistleTrace& trace, int origin_frame, int origin_bin,
                              const SpectrogramCalib& c = {}, int num_frames = 1 << 30);

struct PatchSet {
    std::vector<std::pair<Patch, ContourMask>> positives;
    std::vector<Patch> negatives; // all-zero masks by construction
};

// Positive patches tile whistle-bearing regions at `step` in both axes;
// `n_negative` whistle-free patches are drawn uniformly without replacement.
PatchSet extract_patches(const NormalizedSpectrogram& s,
                         const std::vector<WhistleTrace>& annotations,
                         int step, int n_negative, uint64_t seed);

} // namespace waswhistle::dsp
