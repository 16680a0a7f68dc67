#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "waswhistle/checkpoint.hpp"
#include "waswhistle/io.hpp"
#include "waswhistle/pipeline.hpp"
#include "waswhistle/plot.hpp"
#include "waswhistle/tracker.hpp"

using namespace waswhistle;
namespace fs = std::filesystem;

namespace {

int g_verbosity = 1; // 0 quiet, 1 info, 2 debug

void info(const std::string& msg) {
    if (g_verbosity >= 1) std::cout << msg << "\n";
}

pipeline::ProgressFn progress_printer() {
    if (g_verbosity < 2) return nullptr;
    return [](const std::string& stage, int iter, float value) {
        std::printf("  [%s] iter %d value %.5f\n", stage.c_str(), iter, value);
    };
}

corpus::Corpus load_or_build(const std::string& dir, const pipeline::ExperimentConfig& cfg,
                             int n) {
    if (!dir.empty()) return corpus::load_corpus(dir);
    corpus::SynthesisParams p = cfg.synth;
    p.seed = child_seed(cfg.seed, "corpus/r=0");
    info("synthesizing corpus (n=" + std::to_string(n) + ")");
    return corpus::build_corpus(p, n, n);
}

std::vector<std::vector<float>> scaled_rows(const std::vector<const Grid*>& grids) {
    std::vector<std::vector<float>> rows;
    for (const Grid* g : grids) {
        std::vector<float> row = g->v;
        for (auto& v : row) v = v * 2.f - 1.f;
        rows.push_back(std::move(row));
    }
    return rows;
}

// minimal reader for the sweep ledger, enough to re-render the curves
std::vector<pipeline::RunRecord> read_ledger(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw pipeline::PipelineError("cannot read ledger: " + path);
    std::vector<pipeline::RunRecord> out;
    std::string line;
    std::getline(is, line); // header
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string f[11];
        for (auto& v : f) std::getline(ss, v, '\t');
        pipeline::RunRecord r;
        r.variant = f[0];
        r.n_pos = std::stoi(f[1]);
        r.repeat_index = std::stoi(f[2]);
        r.report.mean_precision = std::stod(f[4]);
        r.report.mean_recall = std::stod(f[5]);
        r.report.mean_f1 = std::stod(f[6]);
        r.report.ods = std::stod(f[7]);
        r.error = f[10];
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stage-wise GAN augmentation pipeline for whistle extraction"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::string config_path, preset = "desk", out_dir = "out", log_level = "info";
    uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "key-value config file overlaid on the preset");
    app.add_option("--preset", preset, "desk (reduced) or paper (full-scale)");
    app.add_option("--seed", seed, "master seed")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--log-level", log_level, "quiet, info, or debug");

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize a training corpus");
    int synth_pos = 500, synth_neg = -1;
    std::string synth_dir;
    synth->add_option("--pos", synth_pos, "positive patch count");
    synth->add_option("--neg", synth_neg, "negative patch count (default: same as --pos)");
    synth->add_option("--dir", synth_dir, "corpus directory (default <out>/corpus)");

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "wav to normalized spectrogram cache");
    std::string prep_wav, prep_spec;
    prep->add_option("--wav", prep_wav, "input wav")->required();
    prep->add_option("--spec", prep_spec, "output spectrogram file")->required();

    // stage trainers
    auto* tng = app.add_subcommand("train-noise-gan", "stage 1: background noise model");
    auto* tcg = app.add_subcommand("train-contour-gan", "stage 2: whistle contour model");
    auto* tfu = app.add_subcommand("train-fusion", "stage 3: signal fusion model");
    auto* gen = app.add_subcommand("generate", "emit a generated training set");
    auto* tex = app.add_subcommand("train-extractor", "train the whistle extraction network");
    std::string corpus_dir, ckpt_out, noise_ckpt, contour_ckpt, fusion_ckpt, extractor_ckpt,
        generated_dir;
    int gen_n = 1000;
    for (auto* sc : {tng, tcg, tfu, gen, tex})
        sc->add_option("--corpus", corpus_dir, "corpus directory (default: synthesized)");
    for (auto* sc : {tng, tcg, tfu, tex}) sc->add_option("--ckpt", ckpt_out, "output checkpoint");
    for (auto* sc : {tfu, gen}) {
        sc->add_option("--noise", noise_ckpt, "stage-1 checkpoint")->required();
        sc->add_option("--contour", contour_ckpt, "stage-2 checkpoint")->required();
    }
    tfu->add_option("--extractor", extractor_ckpt, "frozen consistency checkpoint")->required();
    gen->add_option("--fusion", fusion_ckpt, "stage-3 checkpoint")->required();
    gen->add_option("--n", gen_n, "generated positive (and negative) count");
    gen->add_option("--dir", generated_dir, "output directory (default <out>/generated)");
    tex->add_option("--generated", generated_dir, "generated corpus for augmented training");

    // inference and scoring
    auto* inf = app.add_subcommand("infer", "confidence map for a spectrogram");
    std::string inf_spec, inf_map;
    inf->add_option("--ckpt", extractor_ckpt, "extractor checkpoint")->required();
    inf->add_option("--spec", inf_spec, "input spectrogram")->required();
    inf->add_option("--map", inf_map, "output confidence map")->required();

    auto* ext = app.add_subcommand("extract", "whistle traces for a spectrogram");
    std::string ext_annotations;
    ext->add_option("--ckpt", extractor_ckpt, "extractor checkpoint")->required();
    ext->add_option("--spec", inf_spec, "input spectrogram")->required();
    ext->add_option("--annotations", ext_annotations, "output trace file")->required();

    auto* eva = app.add_subcommand("evaluate", "score detections against ground truth");
    std::string eva_dets, eva_truth, eva_spec;
    eva->add_option("--detections", eva_dets, "detected traces")->required();
    eva->add_option("--truth", eva_truth, "ground-truth traces")->required();
    eva->add_option("--spec", eva_spec, "spectrogram for the SNR validity gate");

    // experiments
    auto* swp = app.add_subcommand("sweep", "dataset-size sweep with optional augmentation");
    bool swp_augment = false;
    swp->add_flag("--augment", swp_augment, "also run the augmented variant per cell");
    auto* abl = app.add_subcommand("ablate", "one augmented run with components removed");
    std::string abl_switches = "full";
    abl->add_option("--switches", abl_switches,
                    "full, -residual, -select, -abn, -abn-select, -residual-select-abn, "
                    "single_gan, random_addition, random_addition_blur");

    auto* plt = app.add_subcommand("plot", "render curves, overlays, and mosaics");
    std::string plt_runs, plt_overlay_spec, plt_overlay_annotations, plt_mosaic_corpus;
    plt->add_option("--runs", plt_runs, "sweep ledger to turn into curves");
    plt->add_option("--overlay-spec", plt_overlay_spec, "spectrogram for a detection overlay");
    plt->add_option("--overlay-annotations", plt_overlay_annotations, "traces drawn on it");
    plt->add_option("--mosaic-corpus", plt_mosaic_corpus, "corpus whose positives are tiled");

    CLI11_PARSE(app, argc, argv);

    if (log_level == "quiet") g_verbosity = 0;
    else if (log_level == "debug") g_verbosity = 2;
    else if (log_level != "info") {
        std::cerr << "unknown log level: " << log_level << "\n";
        return 2;
    }

    try {
        pipeline::ExperimentConfig cfg =
            preset == "paper" ? pipeline::ExperimentConfig{} : pipeline::desk_preset();
        if (preset != "paper" && preset != "desk")
            throw pipeline::PipelineError("unknown preset: " + preset);
        if (!config_path.empty()) {
            Config file = Config::load(config_path);
            Config merged = cfg.to_config();
            merged.overlay(file);
            cfg = pipeline::ExperimentConfig::from_config(merged);
        }
        if (seed_set) cfg.seed = seed;
        if (out_dir != "out" || cfg.out_dir.empty()) cfg.out_dir = out_dir;
        fs::create_directories(cfg.out_dir);
        const int default_n = cfg.subset_sizes.back();

        if (*synth) {
            corpus::SynthesisParams p = cfg.synth;
            p.seed = child_seed(cfg.seed, "corpus/r=0");
            if (synth_neg < 0) synth_neg = synth_pos;
            corpus::Corpus c = corpus::build_corpus(p, synth_pos, synth_neg);
            std::string dir = synth_dir.empty() ? cfg.out_dir + "/corpus" : synth_dir;
            corpus::save_corpus(dir, c, p);
            info("wrote " + dir + " (" + std::to_string(c.positives.size()) + " positives, " +
                 std::to_string(c.negatives.size()) + " negatives)");
        } else if (*prep) {
            save_spectrogram(prep_spec, dsp::compute_spectrogram(dsp::load_wav(prep_wav)));
            info("wrote " + prep_spec);
        } else if (*tng || *tcg) {
            corpus::Corpus c = load_or_build(corpus_dir, cfg, default_n);
            const bool is_noise = bool(*tng);
            gan::WganTrainConfig g = is_noise ? cfg.noise_gan : cfg.contour_gan;
            g.seed = child_seed(cfg.seed, is_noise ? "noise-gan/cli" : "contour-gan/cli");
            std::vector<const Grid*> rows;
            if (is_noise)
                for (const auto& p : c.negatives) rows.push_back(&p.values);
            else
                for (const auto& [p, m] : c.positives) rows.push_back(&m.values);
            gan::ProgressFn prog;
            if (g_verbosity >= 2)
                prog = [](int it, float d, float gl) {
                    std::printf("  iter %d d %.4f g %.4f\n", it, d, gl);
                };
            nn::Checkpoint ck = gan::train_wgan(scaled_rows(rows), g,
                                                is_noise ? "noise-gan" : "contour-gan",
                                                cfg.out_dir + "/failure.ckpt", prog);
            std::string path = ckpt_out.empty()
                                   ? cfg.out_dir + (is_noise ? "/noise-gan.ckpt" : "/contour-gan.ckpt")
                                   : ckpt_out;
            nn::save_checkpoint(path, ck);
            info("wrote " + path);
        } else if (*tfu) {
            corpus::Corpus c = load_or_build(corpus_dir, cfg, default_n);
            fusion::FusionConfig f = cfg.fusion;
            f.seed = child_seed(cfg.seed, "fusion/cli");
            f.residual = cfg.ablation.residual;
            nn::Checkpoint ck = fusion::train_fusion(
                c, nn::load_checkpoint(noise_ckpt), nn::load_checkpoint(contour_ckpt),
                nn::load_checkpoint(extractor_ckpt), f, cfg.out_dir + "/failure.ckpt");
            std::string path = ckpt_out.empty() ? cfg.out_dir + "/fusion.ckpt" : ckpt_out;
            nn::save_checkpoint(path, ck);
            info("wrote " + path);
        } else if (*gen) {
            filter::FilterThresholds th = cfg.thresholds;
            th.enabled = th.enabled && cfg.ablation.select;
            std::vector<filter::FilterDecision> audit;
            corpus::Corpus g = fusion::generate_training_set(
                nn::load_checkpoint(noise_ckpt), nn::load_checkpoint(contour_ckpt),
                nn::load_checkpoint(fusion_ckpt), th, gen_n,
                child_seed(cfg.seed, "generate/cli"), &audit);
            std::string dir = generated_dir.empty() ? cfg.out_dir + "/generated" : generated_dir;
            corpus::save_corpus(dir, g, cfg.synth, true);
            write_text_file(dir + "/filter_audit.tsv", filter::decisions_tsv(audit));
            info("wrote " + dir);
        } else if (*tex) {
            corpus::Corpus c = load_or_build(corpus_dir, cfg, default_n);
            extractor::ExtractorTrainConfig x = cfg.extractor;
            x.seed = child_seed(cfg.seed, "extractor/cli");
            corpus::Corpus gcorp;
            const corpus::Corpus* gptr = nullptr;
            if (!generated_dir.empty()) {
                gcorp = corpus::load_corpus(generated_dir);
                gptr = &gcorp;
            }
            extractor::ProgressFn prog;
            if (g_verbosity >= 2)
                prog = [](int it, float l) { std::printf("  iter %d loss %.5f\n", it, l); };
            nn::Checkpoint ck = extractor::train_extractor(c, gptr, x, nullptr, prog);
            std::string path = ckpt_out.empty() ? cfg.out_dir + "/extractor.ckpt" : ckpt_out;
            nn::save_checkpoint(path, ck);
            info("wrote " + path);
        } else if (*inf) {
            nn::Checkpoint ck = nn::load_checkpoint(extractor_ckpt);
            NormalizedSpectrogram s = load_spectrogram(inf_spec);
            ConfidenceMapFile cm;
            cm.values = extractor::infer_spectrogram(ck, s);
            cm.checkpoint_digest = ck.param_digest();
            cm.spectrogram_digest = fnv1a(reinterpret_cast<const char*>(s.values.v.data()),
                                          s.values.v.size() * sizeof(float));
            cm.frame_period_s = s.frame_period_s;
            cm.bin_hz = s.bin_hz;
            cm.f0_hz = s.f0_hz;
            save_confidence_map(inf_map, cm);
            info("wrote " + inf_map);
        } else if (*ext) {
            nn::Checkpoint ck = nn::load_checkpoint(extractor_ckpt);
            NormalizedSpectrogram s = load_spectrogram(inf_spec);
            Grid conf = extractor::infer_spectrogram(ck, s);
            auto traces = tracker::run_tracker(conf, dsp::calib_of(s));
            save_annotations(ext_annotations, traces);
            info("wrote " + ext_annotations + " (" + std::to_string(traces.size()) + " traces)");
        } else if (*eva) {
            metrics::RecordingEval rec;
            rec.detections = load_annotations(eva_dets);
            rec.ground_truth = load_annotations(eva_truth);
            NormalizedSpectrogram s;
            if (!eva_spec.empty()) {
                s = load_spectrogram(eva_spec);
                rec.spectrogram = &s;
            }
            metrics::EvalReport rep = metrics::evaluate({rec}, {});
            std::cout << rep.table();
            write_text_file(cfg.out_dir + "/report.tsv", rep.tsv());
            info("wrote " + cfg.out_dir + "/report.tsv");
        } else if (*swp) {
            cfg.augment = cfg.augment || swp_augment;
            auto records = pipeline::run_sweep(cfg, progress_printer());
            for (const auto& r : records)
                std::printf("%-22s n=%-6d r=%d f1=%.4f ods=%.4f %s\n", r.variant.c_str(), r.n_pos,
                            r.repeat_index, r.report.mean_f1, r.report.ods, r.error.c_str());
            auto files = plot::plot_report(records, cfg.out_dir);
            for (const auto& f : files) info("wrote " + f);
        } else if (*abl) {
            pipeline::RunRecord full = pipeline::run_ablation(cfg, "full", progress_printer());
            pipeline::RunRecord r = abl_switches == "full"
                                        ? full
                                        : pipeline::run_ablation(cfg, abl_switches,
                                                                 progress_printer());
            std::printf("%-22s f1=%.4f ods=%.4f  (full: f1=%.4f ods=%.4f, delta f1 %+.4f)\n",
                        r.variant.c_str(), r.report.mean_f1, r.report.ods, full.report.mean_f1,
                        full.report.ods, r.report.mean_f1 - full.report.mean_f1);
        } else if (*plt) {
            if (!plt_runs.empty()) {
                auto files = plot::plot_report(read_ledger(plt_runs), cfg.out_dir);
                for (const auto& f : files) info("wrote " + f);
            }
            if (!plt_overlay_spec.empty()) {
                NormalizedSpectrogram s = load_spectrogram(plt_overlay_spec);
                std::vector<WhistleTrace> traces;
                if (!plt_overlay_annotations.empty())
                    traces = load_annotations(plt_overlay_annotations);
                plot::write_ppm(cfg.out_dir + "/overlay.ppm", plot::render_overlay(s, traces));
                info("wrote " + cfg.out_dir + "/overlay.ppm");
            }
            if (!plt_mosaic_corpus.empty()) {
                corpus::Corpus c = corpus::load_corpus(plt_mosaic_corpus);
                std::vector<Grid> tiles;
                for (size_t i = 0; i < c.positives.size() && i < 64; ++i)
                    tiles.push_back(c.positives[i].first.values);
                if (tiles.empty()) throw pipeline::PipelineError("corpus has no positives");
                plot::write_pgm(cfg.out_dir + "/mosaic.pgm", plot::render_mosaic(tiles, 8));
                info("wrote " + cfg.out_dir + "/mosaic.pgm");
            }
            if (plt_runs.empty() && plt_overlay_spec.empty() && plt_mosaic_corpus.empty())
                throw pipeline::PipelineError("nothing to plot");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
