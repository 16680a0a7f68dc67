#include "waswhistle/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "waswhistle/checkpoint.hpp"
#include "waswhistle/io.hpp"
#include "waswhistle/tracker.hpp"

namespace fs = std::filesystem;

namespace waswhistle::pipeline {

// --- switches ---------------------------------------------------------------

std::string AblationSwitches::tag() const {
    if (single_gan) return "single_gan";
    if (random_addition_blur) return "random_addition_blur";
    if (random_addition) return "random_addition";
    std::string t;
    if (!residual) t += "-residual";
    if (!select) t += "-select";
    if (!abn) t += "-abn";
    return t.empty() ? "full" : t;
}

AblationSwitches AblationSwitches::parse(const std::string& switch_set) {
    AblationSwitches sw;
    std::string cur;
    std::vector<std::string> tokens;
    for (char ch : switch_set + ",") {
        if (ch == ',' || ch == ' ') {
            if (!cur.empty()) tokens.push_back(cur);
            cur.clear();
        } else {
            cur += char(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    for (const auto& tok : tokens) {
        if (tok == "full") continue;
        if (tok == "single_gan") {
            sw.single_gan = true;
        } else if (tok == "random_addition") {
            sw.random_addition = true;
        } else if (tok == "random_addition_blur") {
            sw.random_addition = sw.random_addition_blur = true;
        } else if (!tok.empty() && tok[0] == '-') {
            // removal lists like "-abn-select"
            std::string part;
            for (char ch : tok.substr(1) + "-") {
                if (ch == '-') {
                    if (part == "residual") sw.residual = false;
                    else if (part == "select") sw.select = false;
                    else if (part == "abn") sw.abn = false;
                    else if (!part.empty()) throw PipelineError("unknown switch: " + part);
                    part.clear();
                } else {
                    part += ch;
                }
            }
        } else {
            throw PipelineError("unknown switch: " + tok);
        }
    }
    sw.validate();
    return sw;
}

void AblationSwitches::validate() const {
    int alternates = int(single_gan) + int(random_addition);
    if (alternates > 1) throw PipelineError("conflicting generation schemes");
    if (alternates == 1 && (!residual || !abn))
        throw PipelineError("removal switches only apply to the staged method");
}

// --- config (de)serialization -----------------------------------------------

namespace {

std::string synth_text(const corpus::SynthesisParams& p) {
    Config c;
    c.set_int("synth.n_whistles", p.n_whistles);
    c.set_int("synth.fm_poly_degree_min", p.fm_poly_degree_min);
    c.set_int("synth.fm_poly_degree_max", p.fm_poly_degree_max);
    c.set_double("synth.duration_min_s", p.duration_min_s);
    c.set_double("synth.duration_max_s", p.duration_max_s);
    c.set_double("synth.snr_min_db", p.snr_min_db);
    c.set_double("synth.snr_max_db", p.snr_max_db);
    c.set_double("synth.harmonic_prob", p.harmonic_prob);
    c.set_double("synth.undulation_prob", p.undulation_prob);
    c.set_double("synth.click_rate_hz", p.click_rate_hz);
    c.set_double("synth.noise_color", p.noise_color);
    c.set("synth.seed", std::to_string(p.seed));
    return c.text();
}

void synth_into(Config& c, const corpus::SynthesisParams& p) {
    c.overlay(Config::parse(synth_text(p)));
}

corpus::SynthesisParams synth_from(const Config& c, corpus::SynthesisParams d) {
    d.n_whistles = int(c.get_int_or("synth.n_whistles", d.n_whistles));
    d.fm_poly_degree_min = int(c.get_int_or("synth.fm_poly_degree_min", d.fm_poly_degree_min));
    d.fm_poly_degree_max = int(c.get_int_or("synth.fm_poly_degree_max", d.fm_poly_degree_max));
    d.duration_min_s = c.get_double_or("synth.duration_min_s", d.duration_min_s);
    d.duration_max_s = c.get_double_or("synth.duration_max_s", d.duration_max_s);
    d.snr_min_db = c.get_double_or("synth.snr_min_db", d.snr_min_db);
    d.snr_max_db = c.get_double_or("synth.snr_max_db", d.snr_max_db);
    d.harmonic_prob = c.get_double_or("synth.harmonic_prob", d.harmonic_prob);
    d.undulation_prob = c.get_double_or("synth.undulation_prob", d.undulation_prob);
    d.click_rate_hz = c.get_double_or("synth.click_rate_hz", d.click_rate_hz);
    d.noise_color = c.get_double_or("synth.noise_color", d.noise_color);
    d.seed = c.get_u64_or("synth.seed", d.seed);
    return d;
}

void wgan_into(Config& c, const std::string& p, const gan::WganTrainConfig& w) {
    c.set_double(p + ".lr", w.lr);
    c.set_double(p + ".beta1", w.beta1);
    c.set_double(p + ".beta2", w.beta2);
    c.set_int(p + ".batch", w.batch);
    c.set_int(p + ".d_steps_per_g_step", w.d_steps_per_g_step);
    c.set_int(p + ".iterations", w.iterations);
    c.set_double(p + ".gp_weight", w.gp_weight);
    c.set_int(p + ".g_base", w.g_base);
    c.set_int(p + ".d_base", w.d_base);
    c.set_int(p + ".channels", w.channels);
}

gan::WganTrainConfig wgan_from(const Config& c, const std::string& p, gan::WganTrainConfig d) {
    d.lr = float(c.get_double_or(p + ".lr", d.lr));
    d.beta1 = float(c.get_double_or(p + ".beta1", d.beta1));
    d.beta2 = float(c.get_double_or(p + ".beta2", d.beta2));
    d.batch = int(c.get_int_or(p + ".batch", d.batch));
    d.d_steps_per_g_step = int(c.get_int_or(p + ".d_steps_per_g_step", d.d_steps_per_g_step));
    d.iterations = int(c.get_int_or(p + ".iterations", d.iterations));
    d.gp_weight = float(c.get_double_or(p + ".gp_weight", d.gp_weight));
    d.g_base = int(c.get_int_or(p + ".g_base", d.g_base));
    d.d_base = int(c.get_int_or(p + ".d_base", d.d_base));
    d.channels = int(c.get_int_or(p + ".channels", d.channels));
    return d;
}

std::string join_sizes(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_sizes(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

} // namespace

void ExperimentConfig::validate() const {
    synth.validate();
    if (subset_sizes.empty()) throw PipelineError("no subset sizes");
    for (size_t i = 0; i < subset_sizes.size(); ++i) {
        if (subset_sizes[i] < 1) throw PipelineError("subset size must be >= 1");
        if (i && subset_sizes[i] <= subset_sizes[i - 1])
            throw PipelineError("subset sizes must be strictly ascending");
    }
    if (repeats < 1) throw PipelineError("repeats must be >= 1");
    if (generated_per_real < 1) throw PipelineError("generated_per_real must be >= 1");
    if (eval_recordings < 1 || eval_frames < kPatchSize)
        throw PipelineError("invalid evaluation setup");
    noise_gan.validate();
    contour_gan.validate();
    fusion.validate();
    extractor.validate();
    thresholds.validate();
    ablation.validate();
}

Config ExperimentConfig::to_config() const {
    Config c;
    synth_into(c, synth);
    c.set("sweep.sizes", join_sizes(subset_sizes));
    c.set_int("sweep.repeats", repeats);
    c.set_int("sweep.augment", augment ? 1 : 0);
    c.set_int("sweep.generated_per_real", generated_per_real);
    c.set_int("sweep.eval_recordings", eval_recordings);
    c.set_int("sweep.eval_frames", eval_frames);
    c.set("sweep.seed", std::to_string(seed));
    c.set("sweep.out", out_dir);
    if (!cache_dir.empty()) c.set("sweep.cache", cache_dir);
    c.set("sweep.ablation", ablation.tag());
    wgan_into(c, "noise_gan", noise_gan);
    wgan_into(c, "contour_gan", contour_gan);
    c.overlay(Config::parse(fusion.text()));
    c.overlay(Config::parse(extractor.text()));
    c.set_double("filter.entropy_max", thresholds.entropy_max);
    c.set_double("filter.confidence", thresholds.confidence);
    c.set_int("filter.support_min", thresholds.support_min);
    c.set_int("filter.enabled", thresholds.enabled ? 1 : 0);
    return c;
}

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
    ExperimentConfig e;
    e.synth = synth_from(c, e.synth);
    if (c.has("sweep.sizes")) e.subset_sizes = split_sizes(c.get("sweep.sizes"));
    e.repeats = int(c.get_int_or("sweep.repeats", e.repeats));
    e.augment = c.get_int_or("sweep.augment", 0) != 0;
    e.generated_per_real = int(c.get_int_or("sweep.generated_per_real", e.generated_per_real));
    e.eval_recordings = int(c.get_int_or("sweep.eval_recordings", e.eval_recordings));
    e.eval_frames = int(c.get_int_or("sweep.eval_frames", e.eval_frames));
    e.seed = c.get_u64_or("sweep.seed", 0);
    e.out_dir = c.get_or("sweep.out", e.out_dir);
    e.cache_dir = c.get_or("sweep.cache", "");
    e.ablation = AblationSwitches::parse(c.get_or("sweep.ablation", "full"));
    e.noise_gan = wgan_from(c, "noise_gan", e.noise_gan);
    e.contour_gan = wgan_from(c, "contour_gan", e.contour_gan);
    if (c.has("fusion.lr")) e.fusion = fusion::fusion_config_from_text(c.text());
    if (c.has("extractor.lr")) e.extractor = extractor::extractor_config_from_text(c.text());
    e.thresholds.entropy_max = c.get_double_or("filter.entropy_max", e.thresholds.entropy_max);
    e.thresholds.confidence = c.get_double_or("filter.confidence", e.thresholds.confidence);
    e.thresholds.support_min = int(c.get_int_or("filter.support_min", e.thresholds.support_min));
    e.thresholds.enabled = c.get_int_or("filter.enabled", 1) != 0;
    return e;
}

ExperimentConfig desk_preset() {
    ExperimentConfig e;
    e.subset_sizes = {500};
    e.eval_recordings = 6;
    e.eval_frames = 1500;

    e.noise_gan.g_base = 12;
    e.noise_gan.d_base = 12;
    e.noise_gan.batch = 16;
    e.noise_gan.iterations = 120;
    e.contour_gan = e.noise_gan;

    e.fusion.g_base = 10;
    e.fusion.d_base = 10;
    e.fusion.batch = 8;
    e.fusion.iterations = 150;
    e.fusion.pool = 512;

    e.extractor.width = 6;
    e.extractor.batch = 12;
    e.extractor.iterations = 1200;
    e.extractor.decay_every = 800;
    return e;
}

// --- run records --------------------------------------------------------------

std::string RunRecord::tsv_header() {
    return "variant\tn_pos\trepeat\tconfig_digest\tprecision\trecall\tf1\tods\tartifacts\t"
           "stage_seconds\terror\n";
}

std::string RunRecord::tsv_line() const {
    std::ostringstream os;
    os << variant << '\t' << n_pos << '\t' << repeat_index << '\t' << digest_hex(config_digest)
       << '\t' << report.mean_precision << '\t' << report.mean_recall << '\t' << report.mean_f1
       << '\t' << report.ods << '\t';
    for (size_t i = 0; i < artifacts.size(); ++i)
        os << (i ? ";" : "") << artifacts[i].first << '=' << artifacts[i].second;
    os << '\t';
    for (size_t i = 0; i < stage_seconds.size(); ++i)
        os << (i ? ";" : "") << stage_seconds[i].first << '=' << stage_seconds[i].second;
    os << '\t' << error << '\n';
    return os.str();
}

void append_ledger(const std::string& path, const RunRecord& rec) {
    fs::create_directories(fs::path(path).parent_path().empty()
                               ? "."
                               : fs::path(path).parent_path().string());
    const bool fresh = !fs::exists(path);
    std::ofstream os(path, std::ios::app);
    if (!os) throw PipelineError("cannot append to ledger: " + path);
    if (fresh) os << RunRecord::tsv_header();
    os << rec.tsv_line();
}

// --- caching -------------------------------------------------------------------

std::string cache_root(const ExperimentConfig& cfg) {
    std::string root = cfg.cache_dir;
    if (root.empty())
        if (const char* env = std::getenv("WASWHISTLE_CACHE")) root = env;
    if (root.empty()) root = cfg.out_dir + "/cache";
    fs::create_directories(root);
    return root;
}

namespace {

// train-or-load: stage artifacts are keyed by a digest over everything that
// determines them (stage configs, seeds, corpus signature, upstream digests)
nn::Checkpoint cached_stage(const std::string& root, const std::string& stage,
                            const std::string& key_text,
                            const std::function<nn::Checkpoint()>& train) {
    const std::string path =
        root + "/" + digest_hex(fnv1a("stage=" + stage + "\n" + key_text)) + "-" + stage + ".ckpt";
    if (fs::exists(path)) return nn::load_checkpoint(path);
    nn::Checkpoint ck = train();
    nn::save_checkpoint(path, ck);
    return ck;
}

std::vector<std::vector<float>> to_gan_rows(const std::vector<const Grid*>& grids) {
    std::vector<std::vector<float>> rows;
    rows.reserve(grids.size());
    for (const Grid* g : grids) {
        std::vector<float> row = g->v;
        for (auto& v : row) v = v * 2.f - 1.f; // generator range
        rows.push_back(std::move(row));
    }
    return rows;
}

corpus::Corpus nested_subset(const ExperimentConfig& cfg, int n, int repeat) {
    corpus::SynthesisParams p = cfg.synth;
    p.seed = child_seed(cfg.seed, "corpus/r=" + std::to_string(repeat));
    return corpus::build_corpus(p, n, n);
}

std::string corpus_signature(const ExperimentConfig& cfg, int n, int repeat) {
    corpus::SynthesisParams p = cfg.synth;
    p.seed = child_seed(cfg.seed, "corpus/r=" + std::to_string(repeat));
    return synth_text(p) + "subset.n=" + std::to_string(n) + "\n";
}

// alternate generation schemes (ablations): contours from the stage-2 model
// added straight onto stage-1 noise, optionally blurred
corpus::Corpus additive_training_set(const nn::Checkpoint& noise_ckpt,
                                     const nn::Checkpoint& contour_ckpt,
                                     const filter::FilterThresholds& th, int n, uint64_t seed,
                                     bool blur) {
    corpus::Corpus out;
    out.split = "generated";
    Rng rng(seed);
    int made = 0, attempts = 0;
    while (made < n) {
        if (++attempts > 20 * n + 4096) throw PipelineError("contour model degenerate");
        auto noise = gan::sample(noise_ckpt, 1, rng.uniform_int(1u << 30))[0][0];
        auto contour = gan::sample(contour_ckpt, 1, rng.uniform_int(1u << 30))[0][0];
        ContourMask mask(contour);
        if (!filter::judge(mask, th).kept) continue;
        Grid binary(kPatchSize, kPatchSize);
        for (size_t i = 0; i < binary.v.size(); ++i)
            binary.v[i] = contour.v[i] > float(th.confidence) ? 1.f : 0.f;
        const float lambda = 0.03f + 0.2f * float(rng.uniform());
        const float sigma = 0.3f + 1.0f * float(rng.uniform());
        Patch p;
        p.values = fusion::baseline_random_addition(noise, binary, lambda, sigma, blur);
        p.polarity = Polarity::positive;
        out.positives.emplace_back(std::move(p), ContourMask(std::move(binary)));
        ++made;
    }
    for (int i = 0; i < n; ++i) {
        Patch neg;
        neg.values = gan::sample(noise_ckpt, 1, rng.uniform_int(1u << 30))[0][0];
        out.negatives.push_back(std::move(neg));
    }
    return out;
}

// single-GAN ablation: one model emits (sample, mask) pairs; negatives are
// recycled real negatives since no separate noise model exists
corpus::Corpus single_gan_training_set(const nn::Checkpoint& ckpt, const corpus::Corpus& real,
                                       const filter::FilterThresholds& th, int n, uint64_t seed) {
    corpus::Corpus out;
    out.split = "generated";
    Rng rng(seed);
    int made = 0, attempts = 0;
    while (made < n) {
        if (++attempts > 20 * n + 4096) throw PipelineError("generated masks degenerate");
        auto pair = gan::sample(ckpt, 1, rng.uniform_int(1u << 30))[0];
        ContourMask mask(pair[1]);
        if (!filter::judge(mask, th).kept) continue;
        Grid binary(kPatchSize, kPatchSize);
        for (size_t i = 0; i < binary.v.size(); ++i)
            binary.v[i] = pair[1].v[i] > float(th.confidence) ? 1.f : 0.f;
        Patch p;
        p.values = pair[0];
        for (auto& v : p.values.v) v = std::clamp(v, 0.f, 1.f);
        p.polarity = Polarity::positive;
        out.positives.emplace_back(std::move(p), ContourMask(std::move(binary)));
        ++made;
    }
    if (real.negatives.empty()) throw PipelineError("single-gan baseline needs real negatives");
    for (int i = 0; i < n; ++i) out.negatives.push_back(real.negatives[i % real.negatives.size()]);
    return out;
}

} // namespace

// --- evaluation ------------------------------------------------------------------

metrics::EvalReport evaluate_checkpoint(const nn::Checkpoint& extractor_ckpt,
                                        const ExperimentConfig& cfg,
                                        std::vector<Grid>* confidences,
                                        std::vector<corpus::Recording>* recordings,
                                        std::vector<std::vector<WhistleTrace>>* detections) {
    corpus::SynthesisParams ep = cfg.synth;
    ep.seed = child_seed(cfg.seed, "eval");

    std::vector<corpus::Recording> recs;
    std::vector<Grid> confs, gt_masks;
    std::vector<metrics::RecordingEval> evals;
    for (int i = 0; i < cfg.eval_recordings; ++i)
        recs.push_back(corpus::synth_recording(ep, i, cfg.eval_frames));

    for (auto& rec : recs) {
        Grid conf = extractor::infer_spectrogram(extractor_ckpt, rec.spec);
        const auto calib = dsp::calib_of(rec.spec);
        metrics::RecordingEval ev;
        ev.detections = tracker::run_tracker(conf, calib);
        ev.ground_truth = rec.traces;
        ev.spectrogram = &rec.spec;
        if (detections) detections->push_back(ev.detections);

        Grid mask(rec.spec.num_frames(), rec.spec.num_bins());
        for (const auto& tr : rec.traces)
            for (auto [f, b] : dsp::rasterize_trace(tr, calib, rec.spec.num_frames()))
                mask.at(f, b) = 1.f;
        gt_masks.push_back(std::move(mask));
        confs.push_back(std::move(conf));
        evals.push_back(std::move(ev));
    }

    metrics::EvalReport rep = metrics::evaluate(evals, {});
    rep.ods = metrics::ods(confs, gt_masks);
    if (confidences) *confidences = std::move(confs);
    if (recordings) *recordings = std::move(recs);
    return rep;
}

// --- the experiment cells ------------------------------------------------------

RunRecord run_cell(const ExperimentConfig& cfg, int n_pos, int repeat, bool augment,
                   const AblationSwitches& sw, const ProgressFn& progress) {
    cfg.validate();
    RunRecord rec;
    rec.variant = augment ? (sw.tag() == "full" ? "augmented" : sw.tag()) : "baseline";
    rec.n_pos = n_pos;
    rec.repeat_index = repeat;
    rec.config_digest = fnv1a(cfg.to_config().text() + "cell=" + rec.variant + "/" +
                              std::to_string(n_pos) + "/" + std::to_string(repeat) + "\n");

    const std::string root = cache_root(cfg);
    const std::string cell = std::to_string(n_pos) + "/r=" + std::to_string(repeat);
    const std::string sig = corpus_signature(cfg, n_pos, repeat);
    double t0 = now_s();
    auto lap = [&](const std::string& stage) {
        rec.stage_seconds.emplace_back(stage, now_s() - t0);
        t0 = now_s();
    };
    auto note = [&](const std::string& stage, const nn::Checkpoint& ck) {
        rec.artifacts.emplace_back(stage, digest_hex(ck.param_digest()));
    };

    corpus::Corpus subset = nested_subset(cfg, n_pos, repeat);
    lap("synth");

    // the unaugmented extractor doubles as the frozen consistency model
    extractor::ExtractorTrainConfig xcfg = cfg.extractor;
    xcfg.seed = child_seed(cfg.seed, "extractor/" + cell);
    extractor::ProgressFn xprog;
    if (progress) xprog = [&](int it, float l) { progress("extractor", it, l); };
    nn::Checkpoint base_ckpt = cached_stage(root, "extractor", xcfg.text() + sig, [&] {
        return extractor::train_extractor(subset, nullptr, xcfg, nullptr, xprog);
    });
    note("extractor", base_ckpt);
    lap("extractor");

    if (!augment) {
        rec.report = evaluate_checkpoint(base_ckpt, cfg);
        lap("evaluate");
        return rec;
    }

    const int n_gen = cfg.generated_per_real * n_pos;
    filter::FilterThresholds th = cfg.thresholds;
    th.enabled = th.enabled && sw.select;

    corpus::Corpus generated;
    std::string gen_sig;
    if (sw.single_gan) {
        gan::WganTrainConfig scfg = cfg.contour_gan;
        scfg.seed = child_seed(cfg.seed, "single-gan/" + cell);
        nn::Checkpoint single = cached_stage(root, "single-gan", scfg.text() + sig, [&] {
            return fusion::baseline_single_gan(subset, scfg);
        });
        note("single-gan", single);
        lap("single-gan");
        generated = single_gan_training_set(single, subset, th, n_gen,
                                            child_seed(cfg.seed, "generate/" + cell));
        gen_sig = digest_hex(single.param_digest());
    } else {
        gan::WganTrainConfig ncfg = cfg.noise_gan;
        ncfg.seed = child_seed(cfg.seed, "noise-gan/" + cell);
        std::vector<const Grid*> neg_rows;
        for (const auto& p : subset.negatives) neg_rows.push_back(&p.values);
        gan::ProgressFn nprog;
        if (progress) nprog = [&](int it, float d, float) { progress("noise-gan", it, d); };
        nn::Checkpoint noise = cached_stage(root, "noise-gan", ncfg.text() + sig, [&] {
            return gan::train_wgan(to_gan_rows(neg_rows), ncfg, "noise-gan", "", nprog);
        });
        note("noise-gan", noise);
        lap("noise-gan");

        gan::WganTrainConfig ccfg = cfg.contour_gan;
        ccfg.seed = child_seed(cfg.seed, "contour-gan/" + cell);
        std::vector<const Grid*> mask_rows;
        for (const auto& [p, m] : subset.positives) mask_rows.push_back(&m.values);
        gan::ProgressFn cprog;
        if (progress) cprog = [&](int it, float d, float) { progress("contour-gan", it, d); };
        nn::Checkpoint contour = cached_stage(root, "contour-gan", ccfg.text() + sig, [&] {
            return gan::train_wgan(to_gan_rows(mask_rows), ccfg, "contour-gan", "", cprog);
        });
        note("contour-gan", contour);
        lap("contour-gan");

        const uint64_t gen_seed = child_seed(cfg.seed, "generate/" + cell);
        if (sw.random_addition) {
            generated = additive_training_set(noise, contour, th, n_gen, gen_seed,
                                              sw.random_addition_blur);
            gen_sig = digest_hex(noise.param_digest()) + digest_hex(contour.param_digest());
        } else {
            fusion::FusionConfig fcfg = cfg.fusion;
            fcfg.seed = child_seed(cfg.seed, "fusion/" + cell);
            fcfg.residual = sw.residual;
            fcfg.thresholds = th;
            const std::string fkey = fcfg.text() + sig +
                                     "up.noise=" + digest_hex(noise.param_digest()) + "\n" +
                                     "up.contour=" + digest_hex(contour.param_digest()) + "\n" +
                                     "up.extractor=" + digest_hex(base_ckpt.param_digest()) + "\n";
            fusion::ProgressFn fprog;
            if (progress)
                fprog = [&](int it, const fusion::FusionLossReport& r) {
                    progress("fusion", it, r.total_g);
                };
            nn::Checkpoint fused = cached_stage(root, "fusion", fkey, [&] {
                return fusion::train_fusion(subset, noise, contour, base_ckpt, fcfg, "", fprog);
            });
            note("fusion", fused);
            lap("fusion");
            generated = fusion::generate_training_set(noise, contour, fused, th, n_gen, gen_seed);
            gen_sig = digest_hex(fused.param_digest());
        }
    }
    lap("generate");

    extractor::ExtractorTrainConfig acfg = cfg.extractor;
    acfg.seed = child_seed(cfg.seed, "extractor-aug/" + cell);
    const std::string akey = acfg.text() + sig + "generated=" + gen_sig + "/" +
                             std::to_string(n_gen) + "/abn=" + (sw.abn ? "1" : "0") + "\n";
    extractor::ProgressFn aprog;
    if (progress) aprog = [&](int it, float l) { progress("extractor-aug", it, l); };
    nn::Checkpoint aug_ckpt = cached_stage(root, "extractor-aug", akey, [&] {
        const extractor::ProgressFn& prog = aprog;
        if (sw.abn) return extractor::train_extractor(subset, &generated, acfg, nullptr, prog);
        // without auxiliary statistics the generated stream joins the real one
        corpus::Corpus merged = subset;
        merged.positives.insert(merged.positives.end(), generated.positives.begin(),
                                generated.positives.end());
        merged.negatives.insert(merged.negatives.end(), generated.negatives.begin(),
                                generated.negatives.end());
        return extractor::train_extractor(merged, nullptr, acfg, nullptr, prog);
    });
    note("extractor-aug", aug_ckpt);
    lap("extractor-aug");

    rec.report = evaluate_checkpoint(aug_ckpt, cfg);
    lap("evaluate");
    return rec;
}

std::vector<RunRecord> run_sweep(const ExperimentConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    const std::string ledger = cfg.out_dir + "/runs.tsv";
    std::vector<RunRecord> records;
    for (int n : cfg.subset_sizes)
        for (int r = 0; r < cfg.repeats; ++r)
            for (int variant = 0; variant < (cfg.augment ? 2 : 1); ++variant) {
                RunRecord rec;
                try {
                    rec = run_cell(cfg, n, r, variant == 1, cfg.ablation, progress);
                } catch (const std::exception& e) {
                    rec.variant = variant == 1 ? "augmented" : "baseline";
                    rec.n_pos = n;
                    rec.repeat_index = r;
                    rec.error = e.what();
                }
                append_ledger(ledger, rec);
                records.push_back(std::move(rec));
            }
    return records;
}

RunRecord run_ablation(const ExperimentConfig& cfg, const std::string& switch_set,
                       const ProgressFn& progress) {
    cfg.validate();
    AblationSwitches sw = AblationSwitches::parse(switch_set);
    const int n = cfg.subset_sizes.back();
    RunRecord rec = run_cell(cfg, n, 0, true, sw, progress);
    fs::create_directories(cfg.out_dir);
    append_ledger(cfg.out_dir + "/runs.tsv", rec);
    return rec;
}

} // namespace waswhistle::pipeline
