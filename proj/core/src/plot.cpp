#include "waswhistle/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "waswhistle/dsp.hpp"

namespace waswhistle::plot {

void Image::set(int r, int c, uint8_t red, uint8_t green, uint8_t blue) {
    if (r < 0 || r >= rows || c < 0 || c >= cols) return;
    size_t i = (size_t(r) * cols + c) * 3;
    rgb[i] = red;
    rgb[i + 1] = green;
    rgb[i + 2] = blue;
}

void write_pgm(const std::string& path, const Grid& g) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PlotError("cannot write " + path);
    os << "P5\n" << g.cols << ' ' << g.rows << "\n255\n";
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            os.put(char(uint8_t(std::clamp(g.at(r, c), 0.f, 1.f) * 255.f)));
}

void write_ppm(const std::string& path, const Image& im) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PlotError("cannot write " + path);
    os << "P6\n" << im.cols << ' ' << im.rows << "\n255\n";
    os.write(reinterpret_cast<const char*>(im.rgb.data()), std::streamsize(im.rgb.size()));
}

namespace {

void draw_line(Image& im, int r0, int c0, int r1, int c1, uint8_t red, uint8_t green,
               uint8_t blue) {
    int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
    int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
    int err = (dc > dr ? dc : -dr) / 2;
    while (true) {
        im.set(r0, c0, red, green, blue);
        if (r0 == r1 && c0 == c1) break;
        int e = err;
        if (e > -dc) {
            err -= dr;
            c0 += sc;
        }
        if (e < dr) {
            err += dc;
            r0 += sr;
        }
    }
}

struct Palette {
    uint8_t r, g, b;
};
constexpr Palette kPalette[] = {{200, 40, 40}, {40, 90, 200}, {30, 150, 60},
                                {180, 120, 20}, {130, 40, 160}, {20, 140, 150}};

} // namespace

Image render_curves(const std::vector<Series>& series, int rows, int cols) {
    if (series.empty()) throw PlotError("no series to plot");
    const int ml = 44, mr = 12, mt = 12, mb = 28; // margins
    double x_lo = 1e300, x_hi = -1e300, y_lo = 0.0, y_hi = 1.0;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    if (y_hi <= y_lo) y_hi = y_lo + 1.0;

    Image im(rows, cols);
    auto px = [&](double x) {
        return ml + int(std::lround((x - x_lo) / (x_hi - x_lo) * (cols - ml - mr - 1)));
    };
    auto py = [&](double y) {
        return rows - mb - 1 - int(std::lround((y - y_lo) / (y_hi - y_lo) * (rows - mt - mb - 1)));
    };
    // axes and a light grid at each 0.1 of the y range
    draw_line(im, mt, ml, rows - mb - 1, ml, 0, 0, 0);
    draw_line(im, rows - mb - 1, ml, rows - mb - 1, cols - mr - 1, 0, 0, 0);
    for (int i = 1; i <= 9; ++i) {
        int r = py(y_lo + (y_hi - y_lo) * i / 10.0);
        draw_line(im, r, ml + 1, r, cols - mr - 1, 225, 225, 225);
    }
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& pal = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
        const auto& pts = series[si].points;
        for (size_t i = 0; i + 1 < pts.size(); ++i)
            draw_line(im, py(pts[i].second), px(pts[i].first), py(pts[i + 1].second),
                      px(pts[i + 1].first), pal.r, pal.g, pal.b);
        for (auto [x, y] : pts) // point markers
            for (int dr = -2; dr <= 2; ++dr)
                for (int dc = -2; dc <= 2; ++dc) im.set(py(y) + dr, px(x) + dc, pal.r, pal.g, pal.b);
        // legend swatch, top-left
        for (int dr = 0; dr < 8; ++dr)
            for (int dc = 0; dc < 18; ++dc)
                im.set(mt + 4 + int(si) * 12 + dr, ml + 8 + dc, pal.r, pal.g, pal.b);
    }
    return im;
}

Image render_overlay(const NormalizedSpectrogram& s, const std::vector<WhistleTrace>& traces) {
    // bins on the vertical axis (low frequency at the bottom), frames across
    Image im(s.num_bins(), s.num_frames());
    for (int f = 0; f < s.num_frames(); ++f)
        for (int b = 0; b < s.num_bins(); ++b) {
            uint8_t g = uint8_t(std::clamp(s.values.at(f, b), 0.f, 1.f) * 255.f);
            im.set(s.num_bins() - 1 - b, f, g, g, g);
        }
    const auto calib = dsp::calib_of(s);
    for (size_t i = 0; i < traces.size(); ++i) {
        const auto& pal = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
        for (auto [f, b] : dsp::rasterize_trace(traces[i], calib, s.num_frames()))
            im.set(s.num_bins() - 1 - b, f, pal.r, pal.g, pal.b);
    }
    return im;
}

Grid render_mosaic(const std::vector<Grid>& tiles, int tiles_per_row) {
    if (tiles.empty() || tiles_per_row < 1) throw PlotError("empty mosaic");
    const int n = int(tiles.size());
    const int tr = (n + tiles_per_row - 1) / tiles_per_row;
    Grid out(tr * (kPatchSize + 1) - 1, tiles_per_row * (kPatchSize + 1) - 1, 1.f);
    for (int i = 0; i < n; ++i) {
        const Grid& t = tiles[size_t(i)];
        if (t.rows != kPatchSize || t.cols != kPatchSize) throw PlotError("tile must be 64x64");
        const int r0 = (i / tiles_per_row) * (kPatchSize + 1);
        const int c0 = (i % tiles_per_row) * (kPatchSize + 1);
        for (int r = 0; r < kPatchSize; ++r)
            for (int c = 0; c < kPatchSize; ++c) out.at(r0 + r, c0 + c) = t.at(r, c);
    }
    return out;
}

std::vector<std::string> plot_report(const std::vector<pipeline::RunRecord>& records,
                                     const std::string& dir) {
    if (records.empty()) throw PlotError("no run records");
    std::filesystem::create_directories(dir);

    // mean per (variant, n) of the whistle F1 and the best-threshold pixel F1
    std::map<std::string, std::map<int, std::pair<std::vector<double>, std::vector<double>>>> by;
    for (const auto& r : records) {
        if (!r.error.empty()) continue;
        auto& cell = by[r.variant][r.n_pos];
        cell.first.push_back(r.report.mean_f1);
        cell.second.push_back(r.report.ods);
    }
    if (by.empty()) throw PlotError("no successful run records");

    std::vector<Series> f1_series, ods_series;
    for (auto& [variant, cells] : by) {
        Series f1{variant, {}}, od{variant, {}};
        for (auto& [n, vals] : cells) {
            auto mean = [](const std::vector<double>& v) {
                double s = 0;
                for (double x : v) s += x;
                return v.empty() ? 0.0 : s / double(v.size());
            };
            f1.points.emplace_back(n, mean(vals.first));
            od.points.emplace_back(n, mean(vals.second));
        }
        f1_series.push_back(std::move(f1));
        ods_series.push_back(std::move(od));
    }
    std::vector<std::string> written;
    written.push_back(dir + "/f1_vs_n.ppm");
    write_ppm(written.back(), render_curves(f1_series));
    written.push_back(dir + "/ods_vs_n.ppm");
    write_ppm(written.back(), render_curves(ods_series));
    return written;
}

} // namespace waswhistle::plot
