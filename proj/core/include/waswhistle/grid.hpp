#pragma once
#include <cassert>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace waswhistle {

// Row-major 2D grid of floats. For spectrograms the layout is
// (time, frequency): rows = frames, cols = frequency bins ascending.
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<float> v;

    Grid() = default;
    Grid(int r, int c, float fill = 0.f) : rows(r), cols(c), v(size_t(r) * c, fill) {}

    float& at(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[size_t(r) * cols + c];
    }
    float at(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[size_t(r) * cols + c];
    }
    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
};

constexpr int kPatchSize = 64;

enum class Polarity { positive, negative };

// 64x64 spectrogram excerpt together with its origin in the parent spectrogram.
struct Patch {
    Grid values;                 // 64x64, values in [0,1]
    int origin_frame = 0;
    int origin_bin = 0;
    Polarity polarity = Polarity::negative;
};

// 64x64 whistle-presence mask; binary when rasterized from annotations,
// fractional when produced by a generator.
struct ContourMask {
    Grid values;                 // 64x64, values in [0,1]
    ContourMask() : values(kPatchSize, kPatchSize) {}
    explicit ContourMask(Grid g) : values(std::move(g)) {}
};

struct NormalizedSpectrogram {
    Grid values;                 // num_frames x num_bins, values in [0,1]
    double frame_period_s = 0.002;
    double bin_hz = 125.0;
    double f0_hz = 5000.0;

    int num_frames() const { return values.rows; }
    int num_bins() const { return values.cols; }
    double frame_time_s(int frame) const { return frame * frame_period_s; }
    double bin_freq_hz(int bin) const { return f0_hz + bin * bin_hz; }
};

// Polyline of (time, frequency) points; the common currency of the
// annotator, the synthesizer, the tracker and the evaluator.
struct WhistleTrace {
    std::vector<std::pair<double, double>> points; // (time_s, freq_hz), time ascending
    std::string species;
    int id = 0;

    double start_s() const { return points.empty() ? 0.0 : points.front().first; }
    double end_s() const { return points.empty() ? 0.0 : points.back().first; }
    double duration_s() const { return end_s() - start_s(); }
    // linear interpolation of frequency at time t (t within [start, end])
    double freq_at(double t) const;
};

} // namespace waswhistle
