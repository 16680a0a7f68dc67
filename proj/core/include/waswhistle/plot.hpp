#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/grid.hpp"
#include "waswhistle/pipeline.hpp"

namespace waswhistle::plot {

struct PlotError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Image {
    int rows = 0, cols = 0;
    std::vector<uint8_t> rgb; // rows*cols*3, row-major

    Image() = default;
    Image(int r, int c, uint8_t fill = 255) : rows(r), cols(c), rgb(size_t(r) * c * 3, fill) {}
    void set(int r, int c, uint8_t red, uint8_t green, uint8_t blue);
};

// grayscale grid (values clipped to [0,1]) as binary PGM
void write_pgm(const std::string& path, const Grid& g);
void write_ppm(const std::string& path, const Image& im);

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points; // (x, y), x ascending
};

// line chart with axes; y range [0,1] unless the data exceeds it
Image render_curves(const std::vector<Series>& series, int rows = 360, int cols = 520);

// spectrogram in gray (time left-to-right) with detections drawn in color
Image render_overlay(const NormalizedSpectrogram& s, const std::vector<WhistleTrace>& traces);

// 64x64 tiles concatenated into a grid with 1-pixel separators
Grid render_mosaic(const std::vector<Grid>& tiles, int tiles_per_row);

// F1-vs-n and best-threshold-F1-vs-n curves per variant; returns written paths
std::vector<std::string> plot_report(const std::vector<pipeline::RunRecord>& records,
                                     const std::string& dir);

} // namespace waswhistle::plot
