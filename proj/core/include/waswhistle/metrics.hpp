#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/corpus.hpp"
#include "waswhistle/grid.hpp"

namespace waswhistle::metrics {

struct MetricsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MatchCriteria {
    double max_mean_freq_dev_hz = 350.0;
    double min_len_ms = 150.0;
    double min_snr_db = 10.0;
    double min_snr_fraction = 0.30;

    void validate() const;
};

struct SpeciesScore {
    std::string species;
    double precision = 0, recall = 0, f1 = 0;
    long matched = 0, false_positive = 0, valid_gt = 0, discarded_gt = 0;
};

struct EvalReport {
    std::vector<SpeciesScore> per_species;
    double mean_precision = 0, mean_recall = 0, mean_f1 = 0;
    double ods = -1; // set when confidence maps are evaluated too

    std::string tsv() const;   // machine-readable
    std::string table() const; // human-readable
};

struct Prf {
    double precision = 0, recall = 0, f1 = 0;
    long tp = 0, fp = 0, fn = 0;
};

// morphological thinning to a 1-pixel, 8-connected skeleton
Grid thin_mask(const Grid& mask);

// dataset-scale scores: binarize predictions at t, one-to-one greedy match
// of predicted bins to thinned ground-truth bins within Chebyshev d_max
Prf f1_at_threshold(const std::vector<Grid>& preds, const std::vector<Grid>& thinned_gts,
                    double t, int d_max = 2);

// best dataset-scale F1 over 50 thresholds evenly spaced inside (0,1)
double ods(const std::vector<Grid>& preds, const std::vector<Grid>& gts, int d_max = 2);

// duration and SNR gate of the ground-truth annotations
bool validate_ground_truth(const WhistleTrace& gt, const NormalizedSpectrogram& s,
                           const MatchCriteria& c);

struct MatchCounts {
    long matched = 0;     // detections matched to a valid ground truth
    long matched_gt = 0;  // distinct valid ground truths with at least one match
    long false_positive = 0, valid_gt = 0, discarded_gt = 0;
};

// whistle-level matching on one recording; `gt_valid` parallels `gts`
MatchCounts match_detections(const std::vector<WhistleTrace>& dets,
                             const std::vector<WhistleTrace>& gts,
                             const std::vector<bool>& gt_valid, const MatchCriteria& c);

struct RecordingEval {
    std::vector<WhistleTrace> detections;
    std::vector<WhistleTrace> ground_truth;
    const NormalizedSpectrogram* spectrogram = nullptr; // for the SNR gate
};

// per-species precision/recall/F1 with unweighted cross-species means
EvalReport evaluate(const std::vector<RecordingEval>& recordings, const MatchCriteria& c);

} // namespace waswhistle::metrics
