#pragma once
#include <stdexcept>
#include <vector>

#include "waswhistle/dsp.hpp"
#include "waswhistle/grid.hpp"

namespace waswhistle::tracker {

struct TrackerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrackerParams {
    double peak_threshold = 0.5;
    int poly_order_max = 3;
    double fit_window_ms = 80.0;
    double extension_tolerance_hz = 250.0;
    double graph_close_ms = 50.0;
    double min_duration_ms = 150.0;

    void validate(double bin_hz) const;
};

struct PeakCandidate {
    int bin = 0;
    float confidence = 0.f;
};

// A graph may hold several crossing whistles; nodes link forward in time.
struct TonalGraph {
    struct Node {
        int frame = 0, bin = 0;
        float confidence = 0.f;
        std::vector<int> prev, next;
    };
    std::vector<Node> nodes;
    std::vector<int> tips;     // nodes without successors
    int last_extended = 0;     // frame of the latest attached node
    int first_frame = 0;

    double span_ms(double frame_period_s) const;
};

// strict local maxima above the threshold; the leftmost bin of a flat
// plateau wins; out-of-range neighbors count as minus infinity
std::vector<PeakCandidate> pick_peaks(const std::vector<float>& column, double threshold);

// attach this frame's peaks to predicted tips (polynomial extrapolation of
// each tip's recent path) or start new graphs; a peak joins at most one graph
void extend_graphs(std::vector<TonalGraph>& graphs, const std::vector<PeakCandidate>& peaks,
                   int frame, const TrackerParams& p, const dsp::SpectrogramCalib& calib);

// move idle graphs out of the active set; drop closed graphs shorter than
// the minimum duration
void close_and_harvest(std::vector<TonalGraph>& active, std::vector<TonalGraph>& closed,
                       int current_frame, const TrackerParams& p,
                       const dsp::SpectrogramCalib& calib);

// split a closed graph into individual whistles; crossings resolved by
// pairing edges at junctions for minimal slope change
std::vector<WhistleTrace> disentangle(const TonalGraph& graph, const TrackerParams& p,
                                      const dsp::SpectrogramCalib& calib);

std::vector<WhistleTrace> run_tracker(const Grid& confidence, const dsp::SpectrogramCalib& calib,
                                      const TrackerParams& p = {});

} // namespace waswhistle::tracker
