#include "waswhistle/tracker.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace waswhistle::tracker {

void TrackerParams::validate(double bin_hz) const {
    if (peak_threshold <= 0 || poly_order_max < 1 || fit_window_ms <= 0 ||
        extension_tolerance_hz < bin_hz || graph_close_ms <= 0 || min_duration_ms <= 0)
        throw TrackerError("invalid tracker parameters");
}

double TonalGraph::span_ms(double frame_period_s) const {
    return (last_extended - first_frame) * frame_period_s * 1000.0;
}

std::vector<PeakCandidate> pick_peaks(const std::vector<float>& column, double threshold) {
    std::vector<PeakCandidate> peaks;
    const int n = int(column.size());
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && column[j + 1] == column[i]) ++j; // plateau [i, j]
        const float left = i > 0 ? column[i - 1] : -std::numeric_limits<float>::infinity();
        const float right = j + 1 < n ? column[j + 1] : -std::numeric_limits<float>::infinity();
        if (column[i] > threshold && column[i] > left && column[i] > right)
            peaks.push_back({i, column[i]}); // leftmost bin of the plateau
        i = j + 1;
    }
    return peaks;
}

namespace {

// walk back from a tip along the most recent ancestry, newest first
std::vector<std::pair<int, int>> tip_history(const TonalGraph& g, int tip, int window_frames) {
    std::vector<std::pair<int, int>> pts; // (frame, bin)
    int cur = tip;
    const int newest = g.nodes[tip].frame;
    while (cur >= 0 && newest - g.nodes[cur].frame <= window_frames) {
        pts.emplace_back(g.nodes[cur].frame, g.nodes[cur].bin);
        cur = g.nodes[cur].prev.empty() ? -1 : g.nodes[cur].prev.back();
    }
    return pts;
}

// least-squares polynomial extrapolation of bin position at `frame`
double predict_bin(const std::vector<std::pair<int, int>>& pts, int frame, int order_max) {
    if (pts.size() == 1) return pts[0].second;
    // keep the fit overdetermined: exact interpolation of quantized bins
    // oscillates and throws extrapolation off by several bins
    const int order = std::min(order_max, std::max(1, (int(pts.size()) - 1) / 2));
    const double t0 = pts.back().first; // shift for conditioning
    Eigen::MatrixXd a(pts.size(), order + 1);
    Eigen::VectorXd b(pts.size());
    for (size_t r = 0; r < pts.size(); ++r) {
        double t = pts[r].first - t0;
        double p = 1.0;
        for (int c = 0; c <= order; ++c) {
            a(long(r), c) = p;
            p *= t;
        }
        b(long(r)) = pts[r].second;
    }
    Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
    double t = frame - t0, p = 1.0, y = 0.0;
    for (int c = 0; c <= order; ++c) {
        y += coef(c) * p;
        p *= t;
    }
    return y;
}

// least-squares slope (bins per frame) over up to the last 5 points
double recent_slope(const std::vector<std::pair<int, int>>& pts_newest_first) {
    const size_t n = std::min<size_t>(5, pts_newest_first.size());
    if (n < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        double x = pts_newest_first[i].first, y = pts_newest_first[i].second;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double denom = n * sxx - sx * sx;
    return denom == 0 ? 0.0 : (n * sxy - sx * sy) / denom;
}

} // namespace

void extend_graphs(std::vector<TonalGraph>& graphs, const std::vector<PeakCandidate>& peaks,
                   int frame, const TrackerParams& p, const dsp::SpectrogramCalib& calib) {
    const double tol_bins = p.extension_tolerance_hz / calib.bin_hz;
    const int window_frames =
        std::max(1, int(std::lround(p.fit_window_ms / 1000.0 / calib.frame_period_s)));

    // predictions for every active tip
    struct TipRef {
        size_t graph;
        int tip;
        double predicted;
    };
    std::vector<TipRef> tips;
    for (size_t gi = 0; gi < graphs.size(); ++gi)
        for (int tip : graphs[gi].tips) {
            auto hist = tip_history(graphs[gi], tip, window_frames);
            tips.push_back({gi, tip, predict_bin(hist, frame, p.poly_order_max)});
        }

    std::vector<bool> tip_extended(tips.size(), false);
    for (const auto& peak : peaks) {
        int best = -1;
        double best_err = tol_bins;
        for (size_t i = 0; i < tips.size(); ++i) {
            double err = std::abs(tips[i].predicted - peak.bin);
            if (err <= best_err) {
                best_err = err;
                best = int(i);
            }
        }
        if (best >= 0) {
            TonalGraph& g = graphs[tips[size_t(best)].graph];
            const int tip = tips[size_t(best)].tip;
            g.nodes.push_back({frame, peak.bin, peak.confidence, {tip}, {}});
            const int node = int(g.nodes.size()) - 1;
            g.nodes[tip].next.push_back(node);
            g.tips.push_back(node);
            g.last_extended = frame;
            tip_extended[size_t(best)] = true;
        } else {
            TonalGraph g;
            g.nodes.push_back({frame, peak.bin, peak.confidence, {}, {}});
            g.tips = {0};
            g.last_extended = frame;
            g.first_frame = frame;
            graphs.push_back(std::move(g));
        }
    }
    // extended tips are interior now
    for (size_t i = 0; i < tips.size(); ++i)
        if (tip_extended[i]) {
            auto& t = graphs[tips[i].graph].tips;
            t.erase(std::remove(t.begin(), t.end(), tips[i].tip), t.end());
        }
}

void close_and_harvest(std::vector<TonalGraph>& active, std::vector<TonalGraph>& closed,
                       int current_frame, const TrackerParams& p,
                       const dsp::SpectrogramCalib& calib) {
    const double close_frames = p.graph_close_ms / 1000.0 / calib.frame_period_s;
    std::vector<TonalGraph> still;
    for (auto& g : active) {
        if (current_frame - g.last_extended > close_frames) {
            if (g.span_ms(calib.frame_period_s) >= p.min_duration_ms) closed.push_back(std::move(g));
        } else {
            still.push_back(std::move(g));
        }
    }
    active = std::move(still);
}

std::vector<WhistleTrace> disentangle(const TonalGraph& graph, const TrackerParams& p,
                                      const dsp::SpectrogramCalib& calib) {
    // edge-disjoint path decomposition, at junctions preferring the outgoing
    // edge whose direction best continues the path's recent slope
    std::vector<std::vector<bool>> edge_used(graph.nodes.size());
    for (size_t i = 0; i < graph.nodes.size(); ++i)
        edge_used[i].assign(graph.nodes[i].next.size(), false);

    auto has_unused_out = [&](int n) {
        for (bool u : edge_used[size_t(n)])
            if (!u) return true;
        return false;
    };

    std::vector<WhistleTrace> traces;
    auto walk_from = [&](int start) {
        std::vector<std::pair<int, int>> path_newest_first; // (frame, bin)
        WhistleTrace tr;
        int cur = start;
        while (true) {
            const auto& node = graph.nodes[size_t(cur)];
            tr.points.emplace_back(node.frame * calib.frame_period_s,
                                   calib.f0_hz + node.bin * calib.bin_hz);
            path_newest_first.insert(path_newest_first.begin(), {node.frame, node.bin});
            if (path_newest_first.size() > 8) path_newest_first.pop_back();

            int pick = -1;
            double best = std::numeric_limits<double>::infinity();
            const double slope = recent_slope(path_newest_first);
            for (size_t e = 0; e < node.next.size(); ++e) {
                if (edge_used[size_t(cur)][e]) continue;
                const auto& nx = graph.nodes[size_t(node.next[e])];
                double step_slope = double(nx.bin - node.bin) / double(nx.frame - node.frame);
                double err = path_newest_first.size() < 2 ? 0.0 : std::abs(step_slope - slope);
                if (err < best) {
                    best = err;
                    pick = int(e);
                }
            }
            if (pick < 0) break;
            edge_used[size_t(cur)][size_t(pick)] = true;
            cur = node.next[size_t(pick)];
        }
        return tr;
    };

    // start at sources first, then at junctions with leftover branches
    for (int pass = 0; pass < 2; ++pass)
        for (size_t i = 0; i < graph.nodes.size(); ++i) {
            bool source = graph.nodes[i].prev.empty();
            if (pass == 0 && !source) continue;
            while (has_unused_out(int(i)) || (pass == 0 && source && graph.nodes[i].next.empty())) {
                WhistleTrace tr = walk_from(int(i));
                double dur_ms = (tr.points.back().first - tr.points.front().first) * 1000.0;
                if (dur_ms >= p.min_duration_ms) traces.push_back(std::move(tr));
                if (graph.nodes[i].next.empty()) break; // isolated node handled once
            }
        }
    return traces;
}

std::vector<WhistleTrace> run_tracker(const Grid& confidence, const dsp::SpectrogramCalib& calib,
                                      const TrackerParams& p) {
    p.validate(calib.bin_hz);
    std::vector<TonalGraph> active, closed;
    std::vector<float> column(size_t(confidence.cols));
    for (int frame = 0; frame < confidence.rows; ++frame) {
        for (int c = 0; c < confidence.cols; ++c) column[size_t(c)] = confidence.at(frame, c);
        auto peaks = pick_peaks(column, p.peak_threshold);
        extend_graphs(active, peaks, frame, p, calib);
        close_and_harvest(active, closed, frame, p, calib);
    }
    for (auto& g : active)
        if (g.span_ms(calib.frame_period_s) >= p.min_duration_ms) closed.push_back(std::move(g));

    std::vector<WhistleTrace> traces;
    int next_id = 1;
    for (const auto& g : closed)
        for (auto& tr : disentangle(g, p, calib)) {
            tr.id = next_id++;
            traces.push_back(std::move(tr));
        }
    return traces;
}

} // namespace waswhistle::tracker
