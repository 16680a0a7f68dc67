#pragma once
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/config.hpp"
#include "waswhistle/corpus.hpp"
#include "waswhistle/extractor.hpp"
#include "waswhistle/fusion.hpp"
#include "waswhistle/gan.hpp"
#include "waswhistle/metrics.hpp"

namespace waswhistle::pipeline {

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Which pieces of the full method a run keeps. The three removable
// components toggle off; the last three are replacement generation schemes.
struct AblationSwitches {
    bool residual = true;
    bool select = true;
    bool abn = true;
    bool single_gan = false;
    bool random_addition = false;
    bool random_addition_blur = false;

    std::string tag() const; // "full", "-residual-select", "random_addition", ...
    // parse "full", "-residual", "-abn-select", "single_gan", ... ;
    // throws on unknown switches
    static AblationSwitches parse(const std::string& switch_set);
    void validate() const;
};

struct ExperimentConfig {
    corpus::SynthesisParams synth;
    std::vector<int> subset_sizes = {500}; // ascending n (positives = negatives)
    int repeats = 1;
    bool augment = false;
    int generated_per_real = 10; // generated sample count = this x n
    gan::WganTrainConfig noise_gan, contour_gan;
    fusion::FusionConfig fusion;
    extractor::ExtractorTrainConfig extractor;
    filter::FilterThresholds thresholds;
    AblationSwitches ablation;
    int eval_recordings = 6;
    int eval_frames = 1500;
    uint64_t seed = 0;
    std::string out_dir = "out";
    std::string cache_dir; // empty: $WASWHISTLE_CACHE, else out_dir/cache

    void validate() const;
    Config to_config() const;
    static ExperimentConfig from_config(const Config& c);
};

// workstation-scale preset: the whole pipeline in reduced widths/iterations
ExperimentConfig desk_preset();

struct RunRecord {
    std::string variant; // "baseline", "augmented", or an ablation tag
    int n_pos = 0;
    int repeat_index = 0;
    uint64_t config_digest = 0;
    std::vector<std::pair<std::string, std::string>> artifacts; // stage -> digest hex
    std::vector<std::pair<std::string, double>> stage_seconds;
    metrics::EvalReport report;
    std::string error; // non-empty when a stage failed; run skipped, sweep continues

    static std::string tsv_header();
    std::string tsv_line() const;
};

using ProgressFn = std::function<void(const std::string& stage, int iter, float value)>;

// artifact cache directory (created on demand)
std::string cache_root(const ExperimentConfig& cfg);

// evaluation on the held-out synthetic recordings: whistle-level scores plus
// the best-threshold pixel F1 over the confidence maps
metrics::EvalReport evaluate_checkpoint(const nn::Checkpoint& extractor_ckpt,
                                        const ExperimentConfig& cfg,
                                        std::vector<Grid>* confidences = nullptr,
                                        std::vector<corpus::Recording>* recordings = nullptr,
                                        std::vector<std::vector<WhistleTrace>>* detections = nullptr);

// one cell: nested subset for (n, repeat), stage training per switches
// (cached by config digest), extractor training, evaluation
RunRecord run_cell(const ExperimentConfig& cfg, int n_pos, int repeat, bool augment,
                   const AblationSwitches& sw, const ProgressFn& progress = nullptr);

// the dataset-size sweep: every n x repeat, baseline and (optionally)
// augmented variants; records appended to <out>/runs.tsv as they finish
std::vector<RunRecord> run_sweep(const ExperimentConfig& cfg,
                                 const ProgressFn& progress = nullptr);

// one augmented run with the given switch set (e.g. "-residual,-select")
RunRecord run_ablation(const ExperimentConfig& cfg, const std::string& switch_set,
                       const ProgressFn& progress = nullptr);

void append_ledger(const std::string& path, const RunRecord& rec);

} // namespace waswhistle::pipeline
