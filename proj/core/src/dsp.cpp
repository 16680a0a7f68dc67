#include "waswhistle/dsp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "waswhistle/io.hpp"
#include "waswhistle/rng.hpp"

namespace waswhistle::dsp {

Waveform load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DspError("cannot open " + path);
    char riff[4], wave[4];
    f.read(riff, 4);
    read_u32(f); // file size
    f.read(wave, 4);
    if (!f || std::memcmp(riff, "RIFF", 4) || std::memcmp(wave, "WAVE", 4))
        throw DspError(path + ": not a RIFF/WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    Waveform w;
    while (f) {
        char id[4];
        f.read(id, 4);
        if (!f) break;
        uint32_t len = read_u32(f);
        if (!std::memcmp(id, "fmt ", 4)) {
            format = uint16_t(read_u32(f) & 0xffff);
            // re-read properly: fmt chunk is u16 fields
            f.seekg(-4, std::ios::cur);
            uint16_t buf[8];
            read_bytes(f, buf, 16);
            format = buf[0];
            channels = buf[1];
            sample_rate = uint32_t(buf[2]) | (uint32_t(buf[3]) << 16);
            bits = buf[7];
            if (len > 16) f.seekg(len - 16, std::ios::cur);
        } else if (!std::memcmp(id, "data", 4)) {
            if (channels == 0) throw DspError(path + ": data chunk before fmt");
            const uint32_t bytes_per_sample = bits / 8;
            const uint32_t n = len / (bytes_per_sample * channels);
            w.samples.resize(n);
            std::vector<char> raw(len);
            read_bytes(f, raw.data(), len);
            for (uint32_t i = 0; i < n; ++i) {
                const char* p = raw.data() + size_t(i) * channels * bytes_per_sample;
                if (format == 1 && bits == 16) {
                    int16_t s;
                    std::memcpy(&s, p, 2);
                    w.samples[i] = float(s) / 32768.f;
                } else if (format == 3 && bits == 32) {
                    float s;
                    std::memcpy(&s, p, 4);
                    w.samples[i] = s;
                } else {
                    throw DspError(path + ": unsupported WAV encoding (PCM16/float32 only)");
                }
            }
        } else {
            f.seekg(len + (len & 1), std::ios::cur);
        }
    }
    if (sample_rate == 0 || w.samples.empty()) throw DspError(path + ": missing fmt/data");
    w.sample_rate = int(sample_rate);
    return w;
}

int SpectrogramConfig::frame_samples(int sr) const {
    return int(std::lround(sr * frame_len_ms / 1000.0));
}
int SpectrogramConfig::hop_samples(int sr) const {
    return int(std::lround(sr * hop_ms / 1000.0));
}
int SpectrogramConfig::band_bins() const {
    const double bw = bin_hz();
    return int(std::lround(band_high_hz / bw)) - int(std::lround(band_low_hz / bw)) + 1;
}

NormalizedSpectrogram compute_spectrogram(const Waveform& w, const SpectrogramConfig& cfg) {
    const int sr = w.sample_rate;
    if (cfg.band_high_hz > sr / 2.0) throw DspError("band out of range");
    const int n = cfg.frame_samples(sr);
    const int hop = cfg.hop_samples(sr);
    if (int(w.samples.size()) < n) throw DspError("insufficient samples");

    const double bw = cfg.bin_hz(); // = sr / n
    const int k_lo = int(std::lround(cfg.band_low_hz / bw));
    const int k_hi = int(std::lround(cfg.band_high_hz / bw));
    const int num_bins = k_hi - k_lo + 1;
    const int num_frames = int((w.samples.size() - size_t(n)) / size_t(hop)) + 1;

    // DFT length equals the frame length (no zero padding), evaluated only on
    // the retained band as one real GEMM pair against precomputed trig tables.
    Eigen::MatrixXf cosT(n, num_bins), sinT(n, num_bins);
    for (int k = 0; k < num_bins; ++k) {
        const double omega = 2.0 * M_PI * (k_lo + k) / double(n);
        for (int t = 0; t < n; ++t) {
            cosT(t, k) = float(std::cos(omega * t));
            sinT(t, k) = float(std::sin(omega * t));
        }
    }
    std::vector<float> window(n);
    for (int t = 0; t < n; ++t)
        window[t] = float(0.54 - 0.46 * std::cos(2.0 * M_PI * t / (n - 1)));

    Eigen::MatrixXf frames(num_frames, n);
    for (int i = 0; i < num_frames; ++i)
        for (int t = 0; t < n; ++t)
            frames(i, t) = w.samples[size_t(i) * hop + t] * window[t];

    Eigen::MatrixXf re = frames * cosT;
    Eigen::MatrixXf im = frames * sinT;

    NormalizedSpectrogram s;
    s.frame_period_s = cfg.hop_ms / 1000.0;
    s.bin_hz = bw;
    s.f0_hz = cfg.band_low_hz;
    s.values = Grid(num_frames, num_bins);
    const float lo = float(cfg.clip_lo), hi = float(cfg.clip_hi);
    for (int i = 0; i < num_frames; ++i) {
        for (int k = 0; k < num_bins; ++k) {
            const float mag = std::sqrt(re(i, k) * re(i, k) + im(i, k) * im(i, k));
            float v = mag > 0.f ? std::log10(mag) : lo;
            v = std::clamp(v, lo, hi);
            s.values.at(i, k) = v / hi;
        }
    }
    return s;
}

SpectrogramCalib calib_of(const NormalizedSpectrogram& s) {
    return {s.frame_period_s, s.bin_hz, s.f0_hz, s.num_bins()};
}

int freq_to_bin(double freq_hz, const SpectrogramCalib& c) {
    // floor(x + 0.5) sends exact .5 fractions upward
    return int(std::floor((freq_hz - c.f0_hz) / c.bin_hz + 0.5));
}

std::vector<std::pair<int, int>> rasterize_trace(const WhistleTrace& trace,
                                                 const SpectrogramCalib& c,
                                                 int num_frames) {
    std::vector<std::pair<int, int>> out;
    if (trace.points.size() < 2) return out;
    const int f_first = std::max(0, int(std::ceil(trace.start_s() / c.frame_period_s)));
    const int f_last = std::min(num_frames - 1, int(std::floor(trace.end_s() / c.frame_period_s)));
    for (int fr = f_first; fr <= f_last; ++fr) {
        const double t = fr * c.frame_period_s;
        const int bin = freq_to_bin(trace.freq_at(t), c);
        if (bin >= 0 && bin < c.num_bins) out.emplace_back(fr, bin);
    }
    return out;
}

ContourMask rasterize_contour(const WhistleTrace& trace, int origin_frame, int origin_bin,
                              const SpectrogramCalib& c, int num_frames) {
    ContourMask m;
    for (const auto& [fr, bin] : rasterize_trace(trace, c, num_frames)) {
        const int i = fr - origin_frame, j = bin - origin_bin;
        if (i >= 0 && i < kPatchSize && j >= 0 && j < kPatchSize) m.values.at(i, j) = 1.f;
    }
    return m;
}

namespace {

// inclusive-rectangle sums over an occupancy grid
struct PrefixSum {
    int rows, cols;
    std::vector<int64_t> p;
    PrefixSum(const Grid& g) : rows(g.rows), cols(g.cols), p(size_t(rows + 1) * (cols + 1), 0) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                p[size_t(r + 1) * (cols + 1) + c + 1] =
                    p[size_t(r) * (cols + 1) + c + 1] + p[size_t(r + 1) * (cols + 1) + c] -
                    p[size_t(r) * (cols + 1) + c] + (g.at(r, c) > 0 ? 1 : 0);
    }
    int64_t rect(int r0, int c0, int r1, int c1) const { // inclusive corners
        return p[size_t(r1 + 1) * (cols + 1) + c1 + 1] - p[size_t(r0) * (cols + 1) + c1 + 1] -
               p[size_t(r1 + 1) * (cols + 1) + c0] + p[size_t(r0) * (cols + 1) + c0];
    }
};

Patch cut_patch(const NormalizedSpectrogram& s, int of, int ob, Polarity pol) {
    Patch p;
    p.values = Grid(kPatchSize, kPatchSize);
    p.origin_frame = of;
    p.origin_bin = ob;
    p.polarity = pol;
    for (int i = 0; i < kPatchSize; ++i)
        for (int j = 0; j < kPatchSize; ++j)
            p.values.at(i, j) = s.values.at(of + i, ob + j);
    return p;
}

} // namespace

PatchSet extract_patches(const NormalizedSpectrogram& s,
                         const std::vector<WhistleTrace>& annotations,
                         int step, int n_negative, uint64_t seed) {
    if (step < 1) throw DspError("step must be >= 1");
    const int F = s.num_frames(), B = s.num_bins();
    PatchSet out;
    if (F < kPatchSize || B < kPatchSize) {
        if (n_negative > 0) throw DspError("0 whistle-free patch positions available");
        return out;
    }
    const auto c = calib_of(s);

    std::vector<std::pair<int, int>> raster;
    for (const auto& tr : annotations) {
        auto pts = rasterize_trace(tr, c, F);
        raster.insert(raster.end(), pts.begin(), pts.end());
    }
    Grid occ(F, B);
    for (const auto& [fr, bin] : raster) occ.at(fr, bin) = 1.f;
    PrefixSum ps(occ);

    // positive tiling: stride `step` in both axes, border windows discarded
    for (int of = 0; of + kPatchSize <= F; of += step) {
        for (int ob = 0; ob + kPatchSize <= B; ob += step) {
            if (ps.rect(of, ob, of + kPatchSize - 1, ob + kPatchSize - 1) == 0) continue;
            Patch p = cut_patch(s, of, ob, Polarity::positive);
            ContourMask m;
            for (const auto& [fr, bin] : raster) {
                const int i = fr - of, j = bin - ob;
                if (i >= 0 && i < kPatchSize && j >= 0 && j < kPatchSize)
                    m.values.at(i, j) = 1.f;
            }
            out.positives.emplace_back(std::move(p), std::move(m));
        }
    }

    // negatives: uniform without replacement over all whistle-free origins
    std::vector<int64_t> free_origins;
    for (int of = 0; of + kPatchSize <= F; ++of)
        for (int ob = 0; ob + kPatchSize <= B; ++ob)
            if (ps.rect(of, ob, of + kPatchSize - 1, ob + kPatchSize - 1) == 0)
                free_origins.push_back(int64_t(of) * B + ob);
    if (n_negative > int(free_origins.size()))
        throw DspError("only " + std::to_string(free_origins.size()) +
                       " whistle-free patch positions available");
    Rng rng(seed);
    for (int k = 0; k < n_negative; ++k) {
        const size_t pick = k + size_t(rng.uniform_int(free_origins.size() - k));
        std::swap(free_origins[k], free_origins[pick]);
        const int of = int(free_origins[k] / B), ob = int(free_origins[k] % B);
        out.negatives.push_back(cut_patch(s, of, ob, Polarity::negative));
    }
    return out;
}

} // namespace waswhistle::dsp
