#include "waswhistle/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "waswhistle/io.hpp"

namespace waswhistle::corpus {

namespace fs = std::filesystem;

static constexpr int kBandBins = 361;
static constexpr double kDbFullScale = 120.0; // [0,1] spectrogram spans 0..120 dB

void SynthesisParams::validate() const {
    if (n_whistles < 0) throw CorpusError("n_whistles must be >= 0");
    if (fm_poly_degree_min < 0 || fm_poly_degree_max < fm_poly_degree_min)
        throw CorpusError("bad fm_poly_degree range");
    if (duration_max_s < duration_min_s || duration_min_s <= 0)
        throw CorpusError("bad duration range");
    if (snr_max_db < snr_min_db) throw CorpusError("bad snr range");
    if (harmonic_prob < 0 || harmonic_prob > 1) throw CorpusError("bad harmonic_prob");
    if (undulation_prob < 0 || undulation_prob > 1) throw CorpusError("bad undulation_prob");
    if (click_rate_hz < 0) throw CorpusError("bad click_rate_hz");
}

NormalizedSpectrogram synth_background(const SynthesisParams& params, int n_frames, Rng& rng) {
    params.validate();
    if (n_frames < kPatchSize) throw CorpusError("n_frames must be >= 64");
    NormalizedSpectrogram s;
    s.values = Grid(n_frames, kBandBins);
    const double base = 0.30, sd = 0.04;
    for (int b = 0; b < kBandBins; ++b) {
        // spectral slope: positive noise_color tilts energy toward low frequency
        const double mean = base + params.noise_color * (0.5 - double(b) / (kBandBins - 1)) * 0.3;
        for (int fr = 0; fr < n_frames; ++fr)
            s.values.at(fr, b) = float(std::clamp(rng.normal(mean, sd), 0.0, 1.0));
    }
    // click transients: full-band stripes at Poisson times
    const double duration_s = n_frames * s.frame_period_s;
    const int n_clicks = rng.poisson(params.click_rate_hz * duration_s);
    for (int k = 0; k < n_clicks; ++k) {
        const int fr = int(rng.uniform_int(uint64_t(n_frames)));
        const int width = 1 + int(rng.uniform_int(2));
        for (int d = 0; d < width && fr + d < n_frames; ++d)
            for (int b = 0; b < kBandBins; ++b)
                s.values.at(fr + d, b) =
                    std::min(1.f, s.values.at(fr + d, b) + 0.25f);
    }
    return s;
}

WhistleTrace synth_whistle_trace(const SynthesisParams& params, Rng& rng) {
    params.validate();
    WhistleTrace t;
    const double dur = rng.uniform(params.duration_min_s, params.duration_max_s);
    const int degree = params.fm_poly_degree_min +
                       int(rng.uniform_int(uint64_t(params.fm_poly_degree_max -
                                                    params.fm_poly_degree_min + 1)));
    const double f_start = rng.uniform(8000.0, 42000.0);
    std::vector<double> coeff(size_t(degree) + 1, 0.0);
    coeff[0] = f_start;
    for (int k = 1; k <= degree; ++k) coeff[size_t(k)] = rng.uniform(-12000.0, 12000.0);

    double und_amp = 0.0, und_cycles = 0.0, und_phase = 0.0;
    if (rng.uniform() < params.undulation_prob) {
        und_amp = rng.uniform(200.0, 1200.0);
        und_cycles = rng.uniform(1.0, 5.0);
        und_phase = rng.uniform(0.0, 2.0 * M_PI);
    }

    const double dt = 0.01; // 10 ms annotation density
    const int n_pts = std::max(2, int(std::floor(dur / dt)) + 1);
    for (int i = 0; i < n_pts; ++i) {
        const double u = double(i) / (n_pts - 1);
        double f = 0.0;
        for (int k = degree; k >= 0; --k) f = f * u + coeff[size_t(k)];
        f += und_amp * std::sin(2.0 * M_PI * und_cycles * u + und_phase);
        f = std::clamp(f, 5000.0, 50000.0);
        t.points.emplace_back(u * dur, f);
    }
    t.species = "synthetic";
    return t;
}

static std::vector<double> neighborhood(const NormalizedSpectrogram& s, int frame, int bin) {
    std::vector<double> vals;
    vals.reserve(32);
    for (int d = -16; d <= 16; ++d) {
        if (std::abs(d) <= 3) continue; // exclude the crest and its shoulders
        const int b = bin + d;
        if (b >= 0 && b < s.num_bins()) vals.push_back(s.values.at(frame, b));
    }
    return vals;
}

static double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

double point_snr_db(const NormalizedSpectrogram& s, int frame, int bin) {
    const double peak = s.values.at(frame, bin);
    return (peak - median(neighborhood(s, frame, bin))) * kDbFullScale;
}

double measure_trace_snr_db(const NormalizedSpectrogram& s, const WhistleTrace& trace) {
    const auto pts = dsp::rasterize_trace(trace, dsp::calib_of(s), s.num_frames());
    if (pts.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [fr, bin] : pts) sum += point_snr_db(s, fr, bin);
    return sum / double(pts.size());
}

void inject_whistle(NormalizedSpectrogram& s, const WhistleTrace& trace, double snr_db) {
    const auto c = dsp::calib_of(s);
    if (trace.points.empty() || trace.start_s() < 0 ||
        trace.end_s() > (s.num_frames() - 1) * s.frame_period_s)
        throw CorpusError("trace outside spectrogram extent");
    const auto pts = dsp::rasterize_trace(trace, c, s.num_frames());
    const double amp = snr_db / kDbFullScale;
    const double sigma = 1.0; // cross-frequency ridge width, in bins
    for (const auto& [fr, bin] : pts) {
        const double med = median(neighborhood(s, fr, bin));
        for (int d = -4; d <= 4; ++d) {
            const int b = bin + d;
            if (b < 0 || b >= s.num_bins()) continue;
            const double target = med + amp * std::exp(-0.5 * d * d / (sigma * sigma));
            float& cell = s.values.at(fr, b);
            cell = float(std::clamp(std::max(double(cell), target), 0.0, 1.0));
        }
    }
}

Recording synth_recording(const SynthesisParams& params, int index, int n_frames) {
    Rng rng(child_seed(params.seed, "recording/" + std::to_string(index)));
    Recording rec;
    rec.spec = synth_background(params, n_frames, rng);
    const double total_s = (n_frames - 1) * rec.spec.frame_period_s;
    int next_id = index * 1000;
    for (int w = 0; w < params.n_whistles; ++w) {
        WhistleTrace t = synth_whistle_trace(params, rng);
        if (t.duration_s() >= total_s) continue;
        const double t0 = rng.uniform(0.0, total_s - t.duration_s());
        for (auto& p : t.points) p.first += t0;
        t.id = next_id++;
        const double snr = rng.uniform(params.snr_min_db, params.snr_max_db);
        std::vector<std::pair<WhistleTrace, double>> to_add{{t, snr}};
        if (rng.uniform() < params.harmonic_prob) {
            WhistleTrace h = t;
            h.id = next_id++;
            bool in_band = true;
            for (auto& p : h.points) {
                p.second *= 2.0;
                if (p.second > 50000.0) in_band = false;
            }
            if (in_band) to_add.emplace_back(h, snr - 6.0);
        }
        for (auto& [tr, sdb] : to_add) {
            inject_whistle(rec.spec, tr, sdb);
            rec.traces.push_back(tr);
            rec.snr_db.push_back(sdb);
        }
    }
    return rec;
}

Corpus build_corpus(const SynthesisParams& params, int n_pos, int n_neg) {
    params.validate();
    if (n_pos < 1 || n_neg < 1) throw CorpusError("counts must be >= 1");
    Corpus c;
    const int neg_per_recording = 64;
    for (int index = 0; int(c.positives.size()) < n_pos || int(c.negatives.size()) < n_neg;
         ++index) {
        if (index > 10000) throw CorpusError("corpus generation did not converge");
        Recording rec = synth_recording(params, index);
        auto patches = dsp::extract_patches(rec.spec, rec.traces, 25, neg_per_recording,
                                            child_seed(params.seed, "neg/" + std::to_string(index)));
        for (auto& p : patches.positives) c.positives.push_back(std::move(p));
        for (auto& p : patches.negatives) c.negatives.push_back(std::move(p));
        c.traces.insert(c.traces.end(), rec.traces.begin(), rec.traces.end());
        c.trace_snr_db.insert(c.trace_snr_db.end(), rec.snr_db.begin(), rec.snr_db.end());
    }
    c.positives.resize(size_t(n_pos));
    c.negatives.resize(size_t(n_neg));
    return c;
}

// --- archive -----------------------------------------------------------------

static void save_stack(const std::string& path, const std::vector<const Grid*>& grids) {
    NormalizedSpectrogram s;
    s.values = Grid(int(grids.size()) * kPatchSize, kPatchSize);
    for (size_t i = 0; i < grids.size(); ++i)
        std::copy(grids[i]->v.begin(), grids[i]->v.end(),
                  s.values.v.begin() + i * size_t(kPatchSize) * kPatchSize);
    save_spectrogram(path, s);
}

static std::vector<Grid> load_stack(const std::string& path) {
    NormalizedSpectrogram s = load_spectrogram(path);
    if (s.values.rows % kPatchSize != 0 || s.values.cols != kPatchSize)
        throw CorpusError(path + ": not a 64x64 patch stack");
    std::vector<Grid> out(size_t(s.values.rows / kPatchSize));
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = Grid(kPatchSize, kPatchSize);
        std::copy_n(s.values.v.begin() + i * size_t(kPatchSize) * kPatchSize,
                    size_t(kPatchSize) * kPatchSize, out[i].v.begin());
    }
    return out;
}

void save_corpus(const std::string& dir, const Corpus& c, const SynthesisParams& params,
                 bool generated) {
    fs::create_directories(dir);
    std::ostringstream m;
    m << "format_version=1\n"
      << "generated=" << (generated ? 1 : 0) << "\n"
      << "split=" << c.split << "\n"
      << "n_pos=" << c.positives.size() << "\n"
      << "n_neg=" << c.negatives.size() << "\n"
      << "n_traces=" << c.traces.size() << "\n"
      << "seed=" << params.seed << "\n"
      << "n_whistles=" << params.n_whistles << "\n"
      << "fm_poly_degree=" << params.fm_poly_degree_min << "," << params.fm_poly_degree_max << "\n"
      << "duration_s=" << params.duration_min_s << "," << params.duration_max_s << "\n"
      << "snr_db=" << params.snr_min_db << "," << params.snr_max_db << "\n"
      << "harmonic_prob=" << params.harmonic_prob << "\n"
      << "undulation_prob=" << params.undulation_prob << "\n"
      << "click_rate_hz=" << params.click_rate_hz << "\n"
      << "noise_color=" << params.noise_color << "\n";
    std::ostringstream snr;
    for (size_t i = 0; i < c.trace_snr_db.size(); ++i) {
        if (i) snr << ",";
        snr << c.trace_snr_db[i];
    }
    m << "trace_snr_db=" << snr.str() << "\n";
    write_text_file(dir + "/manifest.txt", m.str());

    std::vector<const Grid*> pos, masks, neg;
    for (const auto& [p, mk] : c.positives) {
        pos.push_back(&p.values);
        masks.push_back(&mk.values);
    }
    for (const auto& p : c.negatives) neg.push_back(&p.values);
    save_stack(dir + "/pos_patches.wspc", pos);
    save_stack(dir + "/pos_masks.wspc", masks);
    save_stack(dir + "/neg_patches.wspc", neg);
    save_annotations(dir + "/traces.tsv", c.traces);
}

Corpus load_corpus(const std::string& dir) {
    Corpus c;
    const std::string manifest = read_text_file(dir + "/manifest.txt");
    std::istringstream ms(manifest);
    std::string line;
    while (std::getline(ms, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "split") c.split = val;
        if (key == "trace_snr_db" && !val.empty()) {
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ',')) c.trace_snr_db.push_back(std::stod(tok));
        }
    }
    auto pos = load_stack(dir + "/pos_patches.wspc");
    auto masks = load_stack(dir + "/pos_masks.wspc");
    auto neg = load_stack(dir + "/neg_patches.wspc");
    if (pos.size() != masks.size()) throw CorpusError(dir + ": patch/mask count mismatch");
    for (size_t i = 0; i < pos.size(); ++i) {
        Patch p;
        p.values = std::move(pos[i]);
        p.polarity = Polarity::positive;
        c.positives.emplace_back(std::move(p), ContourMask(std::move(masks[i])));
    }
    for (auto& g : neg) {
        Patch p;
        p.values = std::move(g);
        p.polarity = Polarity::negative;
        c.negatives.push_back(std::move(p));
    }
    if (fs::exists(dir + "/traces.tsv")) c.traces = load_annotations(dir + "/traces.tsv");
    return c;
}

} // namespace waswhistle::corpus
