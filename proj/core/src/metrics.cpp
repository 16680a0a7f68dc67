#include "waswhistle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace waswhistle::metrics {

void MatchCriteria::validate() const {
    if (max_mean_freq_dev_hz <= 0 || min_len_ms <= 0 || min_snr_db <= 0 ||
        min_snr_fraction <= 0 || min_snr_fraction > 1)
        throw MetricsError("invalid match criteria");
}

// Zhang-Suen thinning; input treated as binary at 0.5
Grid thin_mask(const Grid& mask) {
    Grid g(mask.rows, mask.cols);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = mask.v[i] > 0.5f ? 1.f : 0.f;
    if (g.rows < 3 || g.cols < 3) return g;

    auto p = [&](int r, int c) -> int {
        if (r < 0 || r >= g.rows || c < 0 || c >= g.cols) return 0;
        return g.at(r, c) > 0.5f ? 1 : 0;
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (int step = 0; step < 2; ++step) {
            std::vector<std::pair<int, int>> kill;
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) {
                    if (!p(r, c)) continue;
                    // neighbors clockwise from north
                    int n[8] = {p(r - 1, c), p(r - 1, c + 1), p(r, c + 1), p(r + 1, c + 1),
                                p(r + 1, c), p(r + 1, c - 1), p(r, c - 1), p(r - 1, c - 1)};
                    int b = 0, a = 0;
                    for (int i = 0; i < 8; ++i) {
                        b += n[i];
                        if (!n[i] && n[(i + 1) % 8]) ++a;
                    }
                    if (b < 2 || b > 6 || a != 1) continue;
                    if (step == 0) {
                        if ((n[0] && n[2] && n[4]) || (n[2] && n[4] && n[6])) continue;
                    } else {
                        if ((n[0] && n[2] && n[6]) || (n[0] && n[4] && n[6])) continue;
                    }
                    kill.emplace_back(r, c);
                }
            for (auto [r, c] : kill) g.at(r, c) = 0.f;
            if (!kill.empty()) changed = true;
        }
    }
    return g;
}

Prf f1_at_threshold(const std::vector<Grid>& preds, const std::vector<Grid>& thinned_gts,
                    double t, int d_max) {
    if (preds.size() != thinned_gts.size()) throw MetricsError("prediction/truth length mismatch");
    Prf out;
    for (size_t k = 0; k < preds.size(); ++k) {
        const Grid& pr = preds[k];
        const Grid& gt = thinned_gts[k];
        if (!pr.same_shape(gt)) throw MetricsError("prediction/truth shape mismatch");

        std::vector<std::pair<int, int>> pbins, gbins;
        for (int r = 0; r < pr.rows; ++r)
            for (int c = 0; c < pr.cols; ++c) {
                if (pr.at(r, c) > t) pbins.emplace_back(r, c);
                if (gt.at(r, c) > 0.5f) gbins.emplace_back(r, c);
            }
        // index of ground-truth bins for neighborhood lookup
        std::map<std::pair<int, int>, int> gt_index;
        for (int i = 0; i < int(gbins.size()); ++i) gt_index[gbins[size_t(i)]] = i;

        struct Cand {
            int dist, pi, gi;
        };
        std::vector<Cand> cands;
        for (int pi = 0; pi < int(pbins.size()); ++pi) {
            auto [r, c] = pbins[size_t(pi)];
            for (int dr = -d_max; dr <= d_max; ++dr)
                for (int dc = -d_max; dc <= d_max; ++dc) {
                    auto it = gt_index.find({r + dr, c + dc});
                    if (it != gt_index.end())
                        cands.push_back({std::max(std::abs(dr), std::abs(dc)), pi, it->second});
                }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return std::tie(a.dist, a.pi, a.gi) < std::tie(b.dist, b.pi, b.gi);
        });
        std::vector<bool> p_used(pbins.size(), false), g_used(gbins.size(), false);
        long tp = 0;
        for (const auto& cd : cands) {
            if (p_used[size_t(cd.pi)] || g_used[size_t(cd.gi)]) continue;
            p_used[size_t(cd.pi)] = g_used[size_t(cd.gi)] = true;
            ++tp;
        }
        out.tp += tp;
        out.fp += long(pbins.size()) - tp;
        out.fn += long(gbins.size()) - tp;
    }
    out.precision = out.tp + out.fp == 0 ? 0.0 : double(out.tp) / double(out.tp + out.fp);
    out.recall = out.tp + out.fn == 0 ? 0.0 : double(out.tp) / double(out.tp + out.fn);
    out.f1 = out.precision + out.recall == 0
                 ? 0.0
                 : 2 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

double ods(const std::vector<Grid>& preds, const std::vector<Grid>& gts, int d_max) {
    std::vector<Grid> thinned;
    thinned.reserve(gts.size());
    for (const auto& g : gts) thinned.push_back(thin_mask(g));
    double best = 0.0;
    for (int i = 1; i <= 50; ++i) {
        double t = double(i) / 51.0;
        best = std::max(best, f1_at_threshold(preds, thinned, t, d_max).f1);
    }
    return best;
}

bool validate_ground_truth(const WhistleTrace& gt, const NormalizedSpectrogram& s,
                           const MatchCriteria& c) {
    if (gt.points.size() < 2) return false;
    if (gt.duration_s() * 1000.0 < c.min_len_ms) return false;
    const auto calib = dsp::calib_of(s);
    long ok = 0, total = 0;
    for (const auto& [t, f] : gt.points) {
        int frame = int(std::lround(t / calib.frame_period_s));
        int bin = dsp::freq_to_bin(f, calib);
        if (frame < 0 || frame >= s.num_frames() || bin < 0 || bin >= s.num_bins()) continue;
        ++total;
        if (corpus::point_snr_db(s, frame, bin) >= c.min_snr_db) ++ok;
    }
    return total > 0 && double(ok) / double(total) >= c.min_snr_fraction;
}

namespace {

// mean |f_det - f_gt| over the shared time span, sampled on a 2 ms lattice;
// returns (overlap_s, deviation_hz) or overlap < 0 when the spans are disjoint
std::pair<double, double> overlap_deviation(const WhistleTrace& det, const WhistleTrace& gt) {
    const double lo = std::max(det.start_s(), gt.start_s());
    const double hi = std::min(det.end_s(), gt.end_s());
    if (hi < lo) return {-1.0, 0.0};
    const double step = 0.002;
    double sum = 0;
    long n = 0;
    for (double t = lo; t <= hi + 1e-12; t += step) {
        sum += std::abs(det.freq_at(t) - gt.freq_at(t));
        ++n;
    }
    return {hi - lo, n ? sum / double(n) : 0.0};
}

} // namespace

MatchCounts match_detections(const std::vector<WhistleTrace>& dets,
                             const std::vector<WhistleTrace>& gts,
                             const std::vector<bool>& gt_valid, const MatchCriteria& c) {
    if (gts.size() != gt_valid.size()) throw MetricsError("validity flags length mismatch");
    MatchCounts out;
    for (bool v : gt_valid) (v ? out.valid_gt : out.discarded_gt)++;

    std::vector<bool> gt_matched(gts.size(), false);
    for (const auto& det : dets) {
        struct Cand {
            double overlap, dev;
            size_t gi;
        };
        std::vector<Cand> cands;
        for (size_t gi = 0; gi < gts.size(); ++gi) {
            auto [ov, dev] = overlap_deviation(det, gts[gi]);
            if (ov >= 0) cands.push_back({ov, dev, gi});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.overlap != b.overlap) return a.overlap > b.overlap;
            if (a.dev != b.dev) return a.dev < b.dev;
            return a.gi < b.gi;
        });
        bool resolved = false;
        for (const auto& cd : cands) {
            if (cd.dev >= c.max_mean_freq_dev_hz) continue;
            if (gt_valid[cd.gi]) {
                ++out.matched;
                gt_matched[cd.gi] = true;
            } // matches to invalid ground truth are discarded from all counts
            resolved = true;
            break;
        }
        if (!resolved) ++out.false_positive;
    }
    // recall counts distinct matched ground truths
    long matched_gt = 0;
    for (size_t i = 0; i < gts.size(); ++i)
        if (gt_matched[i]) ++matched_gt;
    // reuse the matched field for detections; matched GTs derived by caller
    out.matched_gt = matched_gt;
    return out;
}

EvalReport evaluate(const std::vector<RecordingEval>& recordings, const MatchCriteria& c) {
    c.validate();
    struct Acc {
        long matched = 0, matched_gt = 0, fp = 0, valid = 0, discarded = 0;
    };
    std::map<std::string, Acc> by_species;

    for (const auto& rec : recordings) {
        std::vector<bool> valid(rec.ground_truth.size(), true);
        if (rec.spectrogram)
            for (size_t i = 0; i < rec.ground_truth.size(); ++i)
                valid[i] = validate_ground_truth(rec.ground_truth[i], *rec.spectrogram, c);

        // false positives are attributed to the recording's dominant species
        std::map<std::string, size_t> species_n;
        for (const auto& gt : rec.ground_truth) ++species_n[gt.species];
        std::string dominant = "(none)";
        size_t dom_n = 0;
        for (auto& [sp, n] : species_n)
            if (n > dom_n) {
                dom_n = n;
                dominant = sp;
            }

        // one matching pass over the whole recording, then split by species
        std::vector<bool> gt_matched(rec.ground_truth.size(), false);
        for (const auto& det : rec.detections) {
            struct Cand {
                double overlap, dev;
                size_t gi;
            };
            std::vector<Cand> cands;
            for (size_t gi = 0; gi < rec.ground_truth.size(); ++gi) {
                auto [ov, dev] = overlap_deviation(det, rec.ground_truth[gi]);
                if (ov >= 0) cands.push_back({ov, dev, gi});
            }
            std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
                if (a.overlap != b.overlap) return a.overlap > b.overlap;
                if (a.dev != b.dev) return a.dev < b.dev;
                return a.gi < b.gi;
            });
            bool resolved = false;
            for (const auto& cd : cands) {
                if (cd.dev >= c.max_mean_freq_dev_hz) continue;
                if (valid[cd.gi]) {
                    ++by_species[rec.ground_truth[cd.gi].species].matched;
                    gt_matched[cd.gi] = true;
                }
                resolved = true; // invalid-truth matches drop out of all counts
                break;
            }
            if (!resolved) ++by_species[dominant].fp;
        }
        for (size_t gi = 0; gi < rec.ground_truth.size(); ++gi) {
            Acc& a = by_species[rec.ground_truth[gi].species];
            if (valid[gi]) {
                ++a.valid;
                if (gt_matched[gi]) ++a.matched_gt;
            } else {
                ++a.discarded;
            }
        }
    }

    EvalReport rep;
    for (auto& [sp, a] : by_species) {
        SpeciesScore s;
        s.species = sp;
        s.matched = a.matched;
        s.false_positive = a.fp;
        s.valid_gt = a.valid;
        s.discarded_gt = a.discarded;
        s.precision = a.matched + a.fp == 0 ? 0.0 : double(a.matched) / double(a.matched + a.fp);
        s.recall = a.valid == 0 ? 0.0 : double(a.matched_gt) / double(a.valid);
        s.f1 = s.precision + s.recall == 0 ? 0.0
                                           : 2 * s.precision * s.recall / (s.precision + s.recall);
        rep.per_species.push_back(std::move(s));
    }
    if (!rep.per_species.empty()) {
        for (const auto& s : rep.per_species) {
            rep.mean_precision += s.precision;
            rep.mean_recall += s.recall;
            rep.mean_f1 += s.f1;
        }
        rep.mean_precision /= double(rep.per_species.size());
        rep.mean_recall /= double(rep.per_species.size());
        rep.mean_f1 /= double(rep.per_species.size());
    }
    return rep;
}

std::string EvalReport::tsv() const {
    std::ostringstream os;
    os << "species\tprecision\trecall\tf1\tmatched\tfalse_positive\tvalid_gt\tdiscarded_gt\n";
    for (const auto& s : per_species)
        os << s.species << '\t' << s.precision << '\t' << s.recall << '\t' << s.f1 << '\t'
           << s.matched << '\t' << s.false_positive << '\t' << s.valid_gt << '\t'
           << s.discarded_gt << '\n';
    os << "(mean)\t" << mean_precision << '\t' << mean_recall << '\t' << mean_f1 << "\t\t\t\t\n";
    if (ods >= 0) os << "(ods)\t\t\t" << ods << "\t\t\t\t\n";
    return os.str();
}

std::string EvalReport::table() const {
    std::ostringstream os;
    char line[160];
    os << "species              precision   recall       f1\n";
    for (const auto& s : per_species) {
        std::snprintf(line, sizeof line, "%-20s %9.4f %8.4f %8.4f\n", s.species.c_str(),
                      s.precision, s.recall, s.f1);
        os << line;
    }
    std::snprintf(line, sizeof line, "%-20s %9.4f %8.4f %8.4f\n", "mean", mean_precision,
                  mean_recall, mean_f1);
    os << line;
    if (ods >= 0) {
        std::snprintf(line, sizeof line, "ods %.4f\n", ods);
        os << line;
    }
    return os.str();
}

} // namespace waswhistle::metrics
