#include "waswhistle/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "waswhistle/config.hpp"
#include "waswhistle/io.hpp"

namespace waswhistle::fusion {

using namespace waswhistle::nn;

UNet::UNet(int in_ch_, int out_ch_, int base_, Rng& rng) : base(base_), in_ch(in_ch_), out_ch(out_ch_) {
    d1 = Conv2d(in_ch, base, 4, 2, 1, rng);
    n1 = InstanceNorm2d(base);
    d2 = Conv2d(base, 2 * base, 4, 2, 1, rng);
    n2 = InstanceNorm2d(2 * base);
    d3 = Conv2d(2 * base, 4 * base, 4, 2, 1, rng);
    n3 = InstanceNorm2d(4 * base);
    u1 = ConvTranspose2d(4 * base, 2 * base, 4, 2, 1, rng);
    m1 = InstanceNorm2d(2 * base);
    u2 = ConvTranspose2d(4 * base, base, 4, 2, 1, rng);
    m2 = InstanceNorm2d(base);
    u3 = ConvTranspose2d(2 * base, base, 4, 2, 1, rng);
    m3 = InstanceNorm2d(base);
    head = Conv2d(base, out_ch, 3, 1, 1, rng);
}

Tensor UNet::forward(const Tensor& x) const {
    Tensor e1 = leaky_relu(n1.forward(d1.forward(x)));
    Tensor e2 = leaky_relu(n2.forward(d2.forward(e1)));
    Tensor e3 = leaky_relu(n3.forward(d3.forward(e2)));
    Tensor h = relu(m1.forward(u1.forward(e3)));
    h = relu(m2.forward(u2.forward(concat_channels(h, e2))));
    h = relu(m3.forward(u3.forward(concat_channels(h, e1))));
    return head.forward(h); // unconstrained residual
}

void UNet::collect(const std::string& p, NamedParams& out) {
    d1.collect(p + ".d1", out);
    n1.collect(p + ".n1", out);
    d2.collect(p + ".d2", out);
    n2.collect(p + ".n2", out);
    d3.collect(p + ".d3", out);
    n3.collect(p + ".n3", out);
    u1.collect(p + ".u1", out);
    m1.collect(p + ".m1", out);
    u2.collect(p + ".u2", out);
    m2.collect(p + ".m2", out);
    u3.collect(p + ".u3", out);
    m3.collect(p + ".m3", out);
    head.collect(p + ".head", out);
}

PatchDiscriminator::PatchDiscriminator(int in_ch, int base_, Rng& rng) : base(base_) {
    c1 = Conv2d(in_ch, base, 4, 2, 1, rng);
    c2 = Conv2d(base, 2 * base, 4, 2, 1, rng);
    n2 = InstanceNorm2d(2 * base);
    c3 = Conv2d(2 * base, 1, 4, 1, 1, rng);
}

Tensor PatchDiscriminator::forward(const Tensor& x) const {
    Tensor h = leaky_relu(c1.forward(x));
    h = leaky_relu(n2.forward(c2.forward(h)));
    return c3.forward(h);
}

void PatchDiscriminator::collect(const std::string& p, NamedParams& out) {
    c1.collect(p + ".c1", out);
    c2.collect(p + ".c2", out);
    n2.collect(p + ".n2", out);
    c3.collect(p + ".c3", out);
}

void FusionConfig::validate() const {
    if (lambda_cycle < 0 || lambda_consistency < 0 || lambda_identity < 0 ||
        gamma_lo >= gamma_hi || gamma_lo <= 0 || lr <= 0 || batch < 1 || iterations < 0 ||
        g_base < 1 || d_base < 1 || pool < 1)
        throw FusionError("invalid fusion config");
}

std::string FusionConfig::text() const {
    Config c;
    c.set_double("fusion.lambda_cycle", lambda_cycle);
    c.set_double("fusion.lambda_consistency", lambda_consistency);
    c.set_double("fusion.lambda_identity", lambda_identity);
    c.set_double("fusion.gamma_lo", gamma_lo);
    c.set_double("fusion.gamma_hi", gamma_hi);
    c.set_double("fusion.lr", lr);
    c.set_double("fusion.beta1", beta1);
    c.set_double("fusion.beta2", beta2);
    c.set_int("fusion.batch", batch);
    c.set_int("fusion.iterations", iterations);
    c.set_int("fusion.g_base", g_base);
    c.set_int("fusion.d_base", d_base);
    c.set_int("fusion.pool", pool);
    c.set_int("fusion.residual", residual ? 1 : 0);
    c.set_double("fusion.filter_entropy_max", thresholds.entropy_max);
    c.set_double("fusion.filter_confidence", thresholds.confidence);
    c.set_int("fusion.filter_support_min", thresholds.support_min);
    c.set_int("fusion.filter_enabled", thresholds.enabled ? 1 : 0);
    c.set("fusion.seed", std::to_string(seed));
    return c.text();
}

FusionConfig fusion_config_from_text(const std::string& text) {
    Config c = Config::parse(text);
    FusionConfig f;
    f.lambda_cycle = float(c.get_double("fusion.lambda_cycle"));
    f.lambda_consistency = float(c.get_double("fusion.lambda_consistency"));
    f.lambda_identity = float(c.get_double("fusion.lambda_identity"));
    f.gamma_lo = float(c.get_double("fusion.gamma_lo"));
    f.gamma_hi = float(c.get_double("fusion.gamma_hi"));
    f.lr = float(c.get_double("fusion.lr"));
    f.beta1 = float(c.get_double("fusion.beta1"));
    f.beta2 = float(c.get_double("fusion.beta2"));
    f.batch = int(c.get_int("fusion.batch"));
    f.iterations = int(c.get_int("fusion.iterations"));
    f.g_base = int(c.get_int("fusion.g_base"));
    f.d_base = int(c.get_int("fusion.d_base"));
    f.pool = int(c.get_int("fusion.pool"));
    f.residual = c.get_int_or("fusion.residual", 1) != 0;
    f.thresholds.entropy_max = c.get_double_or("fusion.filter_entropy_max", f.thresholds.entropy_max);
    f.thresholds.confidence = c.get_double_or("fusion.filter_confidence", f.thresholds.confidence);
    f.thresholds.support_min = int(c.get_int_or("fusion.filter_support_min", f.thresholds.support_min));
    f.thresholds.enabled = c.get_int_or("fusion.filter_enabled", 1) != 0;
    f.seed = c.get_u64_or("fusion.seed", 0);
    return f;
}

FusionNets build_fusion(const FusionConfig& cfg, Rng& rng) {
    FusionNets n;
    n.g_a = UNet(2, 1, cfg.g_base, rng);
    n.g_b = UNet(1, 2, cfg.g_base, rng);
    n.d_a = PatchDiscriminator(1, cfg.d_base, rng);
    n.d_b_noise = PatchDiscriminator(1, cfg.d_base, rng);
    n.d_b_contour = PatchDiscriminator(1, cfg.d_base, rng);
    n.g_a.collect("ga", n.g_params);
    n.g_b.collect("gb", n.g_params);
    n.d_a.collect("da", n.d_params);
    n.d_b_noise.collect("dbn", n.d_params);
    n.d_b_contour.collect("dbw", n.d_params);
    return n;
}

FusionNets fusion_from_checkpoint(const nn::Checkpoint& ckpt) {
    FusionConfig cfg = fusion_config_from_text(ckpt.config_text);
    Rng rng(0);
    FusionNets n = build_fusion(cfg, rng);
    NamedParams all = n.g_params;
    all.insert(all.end(), n.d_params.begin(), n.d_params.end());
    assign_params(ckpt, all);
    return n;
}

Tensor compose_positive(const UNet& g_a, const Tensor& noise, const Tensor& contour,
                        const Tensor& gamma, bool residual) {
    Tensor out = g_a.forward(concat_channels(noise, contour));
    if (!residual) return out; // direct generation: magnitude fixed by the net
    return add(noise, mul(broadcast_n(gamma, out.shape()), out));
}

Grid compose_positive_grid(const UNet& g_a, const Grid& noise, const Grid& contour, float gamma,
                           bool clip, bool residual) {
    Tensor n = Tensor::leaf({1, 1, noise.rows, noise.cols}, noise.v);
    Tensor w = Tensor::leaf({1, 1, contour.rows, contour.cols}, contour.v);
    Tensor g = Tensor::leaf({1}, {gamma});
    Tensor y = compose_positive(g_a, n, w, g, residual);
    Grid out(noise.rows, noise.cols);
    out.v = y.data();
    if (clip)
        for (auto& v : out.v) v = std::clamp(v, 0.f, 1.f);
    return out;
}

static Tensor l1_mean(const Tensor& x) { return mean(sum_per_sample(abs_t(x))); }

static Tensor ls_loss(const Tensor& score_map, float target) {
    return mean(square(add_scalar(score_map, -target)));
}

Tensor consistency_loss(extractor::ExtractorNet& f, const Tensor& composed,
                        const Tensor& contour) {
    Tensor pred = f.forward(composed, false, Stream::real);
    return l1_mean(sub(pred, contour));
}

Tensor identity_loss(const UNet& g_a, const UNet& g_b, const Tensor& noise, bool residual) {
    Tensor zero = Tensor::zeros(noise.shape());
    Tensor a_out = g_a.forward(concat_channels(noise, zero));
    Tensor a_term = l1_mean(residual ? a_out : sub(a_out, noise));
    Tensor b_term = l1_mean(sub(g_b.forward(noise), concat_channels(noise, zero)));
    return add(a_term, b_term);
}

std::pair<Tensor, Tensor> adversarial_and_cycle_losses(
    FusionNets& nets, extractor::ExtractorNet& consistency_model, const Tensor& a_noise,
    const Tensor& a_contour, const Tensor& b_positive, const Tensor& gamma,
    const FusionConfig& cfg, FusionLossReport* report) {
    // A -> B
    Tensor composed = compose_positive(nets.g_a, a_noise, a_contour, gamma, cfg.residual);
    // B -> A
    Tensor pair_hat = nets.g_b.forward(b_positive);
    Tensor noise_hat = slice_channels(pair_hat, 0, 1);
    Tensor contour_hat = slice_channels(pair_hat, 1, 2);

    // generator adversarial terms (least squares, fooling target 1); the two
    // marginal discriminators of domain A are averaged so each domain
    // contributes one unit-scale adversarial term
    Tensor adv_ga = ls_loss(nets.d_a.forward(composed), 1.f);
    Tensor adv_gb = scale(add(ls_loss(nets.d_b_noise.forward(noise_hat), 1.f),
                              ls_loss(nets.d_b_contour.forward(contour_hat), 1.f)),
                          0.5f);

    // cycles: A -> B -> A reconstructs the (noise, contour) pair; B -> A -> B
    // recomposes the positive from the estimated pair with the same gamma
    Tensor rec_a = nets.g_b.forward(composed);
    Tensor cyc_a = l1_mean(sub(rec_a, concat_channels(a_noise, a_contour)));
    Tensor recomposed = compose_positive(nets.g_a, noise_hat, contour_hat, gamma, cfg.residual);
    Tensor cyc_b = l1_mean(sub(recomposed, b_positive));
    Tensor cyc = add(cyc_a, cyc_b);

    Tensor cons = consistency_loss(consistency_model, composed, a_contour);
    Tensor ident = identity_loss(nets.g_a, nets.g_b, a_noise, cfg.residual);

    Tensor l_g = add(add(adv_ga, adv_gb),
                     add(scale(cyc, cfg.lambda_cycle),
                         add(scale(cons, cfg.lambda_consistency),
                             scale(ident, cfg.lambda_identity))));

    // discriminators: real target 1, fake target 0, fakes detached
    Tensor l_da = add(ls_loss(nets.d_a.forward(b_positive), 1.f),
                      ls_loss(nets.d_a.forward(composed.detach()), 0.f));
    Tensor l_db = scale(add(add(ls_loss(nets.d_b_noise.forward(a_noise), 1.f),
                                ls_loss(nets.d_b_noise.forward(noise_hat.detach()), 0.f)),
                            add(ls_loss(nets.d_b_contour.forward(a_contour), 1.f),
                                ls_loss(nets.d_b_contour.forward(contour_hat.detach()), 0.f))),
                        0.5f);
    Tensor l_d = add(l_da, l_db);

    if (report) {
        report->adv_g_a = adv_ga.item();
        report->adv_g_b = adv_gb.item();
        report->cycle = cyc.item();
        report->consistency = cons.item();
        report->identity = ident.item();
        report->total_g = l_g.item();
        report->total_d = l_d.item();
    }
    if (!std::isfinite(l_g.item()) || !std::isfinite(l_d.item()))
        throw FusionError("fusion loss diverged: adv_ga=" + std::to_string(adv_ga.item()) +
                          " adv_gb=" + std::to_string(adv_gb.item()) +
                          " cycle=" + std::to_string(cyc.item()) +
                          " consistency=" + std::to_string(cons.item()) +
                          " identity=" + std::to_string(ident.item()));
    return {l_g, l_d};
}

namespace {

// contour pool drawn through the quality filter; throws when the generator
// rarely produces acceptable contours
std::vector<Grid> filtered_contours(const nn::Checkpoint& contour_ckpt, int n,
                                    const filter::FilterThresholds& th, uint64_t seed,
                                    std::vector<filter::FilterDecision>* audit = nullptr) {
    std::vector<Grid> kept;
    long attempts = 0;
    uint64_t batch_seed = seed;
    while (int(kept.size()) < n) {
        auto samples = gan::sample(contour_ckpt, 256, batch_seed++);
        for (auto& s : samples) {
            ContourMask m(s[0]);
            filter::FilterDecision d = filter::judge(m, th);
            if (audit) audit->push_back(d);
            ++attempts;
            if (d.kept && int(kept.size()) < n) kept.push_back(std::move(m.values));
        }
        if (attempts >= 2048 && double(kept.size()) / double(attempts) < 0.05)
            throw FusionError("contour model degenerate: filter pass rate " +
                              std::to_string(double(kept.size()) / double(attempts)) +
                              " after " + std::to_string(attempts) + " samples");
    }
    return kept;
}

Tensor grids_to_batch(const std::vector<const Grid*>& grids) {
    std::vector<float> buf;
    buf.reserve(grids.size() * size_t(kPatchSize) * kPatchSize);
    for (auto* g : grids) buf.insert(buf.end(), g->v.begin(), g->v.end());
    return Tensor::leaf({int(grids.size()), 1, kPatchSize, kPatchSize}, std::move(buf));
}

} // namespace

nn::Checkpoint train_fusion(const corpus::Corpus& real, const nn::Checkpoint& noise_ckpt,
                            const nn::Checkpoint& contour_ckpt,
                            const nn::Checkpoint& extractor_ckpt, const FusionConfig& cfg,
                            const std::string& failure_path, const ProgressFn& progress) {
    cfg.validate();
    if (real.positives.empty()) throw FusionError("fusion training needs real positives");
    if (extractor_ckpt.params.empty()) throw FusionError("consistency model required");

    extractor::ExtractorNet consistency_model = extractor::extractor_from_checkpoint(extractor_ckpt);

    // domain-A pools from the stage-1/2 generators
    const filter::FilterThresholds& th = cfg.thresholds;
    std::vector<Grid> noise_pool;
    for (auto& s : gan::sample(noise_ckpt, cfg.pool, child_seed(cfg.seed, "fusion/noise-pool")))
        noise_pool.push_back(std::move(s[0]));
    std::vector<Grid> contour_pool =
        filtered_contours(contour_ckpt, cfg.pool, th, child_seed(cfg.seed, "fusion/contour-pool"));

    Rng rng(cfg.seed);
    FusionNets nets = build_fusion(cfg, rng);
    std::vector<Tensor> g_tensors, d_tensors;
    for (auto& [_, t] : nets.g_params) g_tensors.push_back(t);
    for (auto& [_, t] : nets.d_params) d_tensors.push_back(t);

    AdamConfig ac;
    ac.lr = cfg.lr;
    ac.beta1 = cfg.beta1;
    ac.beta2 = cfg.beta2;
    Adam g_opt(ac), d_opt(ac);

    auto make_checkpoint = [&](uint64_t iter) {
        Checkpoint ck;
        ck.kind = "fusion";
        ck.config_text = cfg.text() + "fusion.noise_ckpt=" + digest_hex(noise_ckpt.param_digest()) +
                         "\nfusion.contour_ckpt=" + digest_hex(contour_ckpt.param_digest()) +
                         "\nfusion.extractor_ckpt=" + digest_hex(extractor_ckpt.param_digest()) +
                         "\n";
        ck.config_digest = fnv1a(ck.config_text);
        ck.iteration = iter;
        for (auto& [name, t] : nets.g_params)
            ck.params.emplace_back(name, Tensor::leaf(t.shape(), t.data()));
        for (auto& [name, t] : nets.d_params)
            ck.params.emplace_back(name, Tensor::leaf(t.shape(), t.data()));
        for (auto& [k, v] : g_opt.state()) ck.opt_state["g/" + k] = v;
        for (auto& [k, v] : d_opt.state()) ck.opt_state["d/" + k] = v;
        ck.adam_steps = g_opt.steps();
        rng.state(ck.rng_state);
        return ck;
    };

    FusionLossReport rep;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        try {
            std::vector<const Grid*> bn, bw, bp;
            std::vector<float> gammas;
            for (int i = 0; i < cfg.batch; ++i) {
                bn.push_back(&noise_pool[rng.uniform_int(noise_pool.size())]);
                bw.push_back(&contour_pool[rng.uniform_int(contour_pool.size())]);
                bp.push_back(&real.positives[rng.uniform_int(real.positives.size())].first.values);
                gammas.push_back(float(rng.uniform(cfg.gamma_lo, cfg.gamma_hi)));
            }
            Tensor a_noise = grids_to_batch(bn);
            Tensor a_contour = grids_to_batch(bw);
            Tensor b_positive = grids_to_batch(bp);
            Tensor gamma = Tensor::leaf({cfg.batch}, gammas);

            auto [l_g, l_d] = adversarial_and_cycle_losses(nets, consistency_model, a_noise,
                                                           a_contour, b_positive, gamma, cfg, &rep);
            g_opt.step(nets.g_params, grad(l_g, g_tensors));
            d_opt.step(nets.d_params, grad(l_d, d_tensors));
        } catch (const FusionError&) {
            if (!failure_path.empty()) save_checkpoint(failure_path, make_checkpoint(iter));
            throw;
        }
        if (progress && (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations))
            progress(iter, rep);
    }
    return make_checkpoint(cfg.iterations);
}

corpus::Corpus generate_training_set(const nn::Checkpoint& noise_ckpt,
                                     const nn::Checkpoint& contour_ckpt,
                                     const nn::Checkpoint& fusion_ckpt,
                                     const filter::FilterThresholds& th, int n, uint64_t seed,
                                     std::vector<filter::FilterDecision>* audit) {
    if (n < 1) throw FusionError("generated set size must be >= 1");
    FusionNets nets = fusion_from_checkpoint(fusion_ckpt);
    FusionConfig cfg = fusion_config_from_text(fusion_ckpt.config_text);

    std::vector<Grid> contours =
        filtered_contours(contour_ckpt, n, th, child_seed(seed, "generate/contours"), audit);
    std::vector<Grid> noises;
    for (auto& s : gan::sample(noise_ckpt, 2 * n, child_seed(seed, "generate/noise")))
        noises.push_back(std::move(s[0]));

    Rng rng(child_seed(seed, "generate/gamma"));
    corpus::Corpus out;
    out.split = "generated";
    for (int i = 0; i < n; ++i) {
        float gamma = float(rng.uniform(cfg.gamma_lo, cfg.gamma_hi));
        Grid composed = compose_positive_grid(nets.g_a, noises[i], contours[i], gamma, true, cfg.residual);
        Patch p;
        p.values = std::move(composed);
        p.polarity = Polarity::positive;
        out.positives.emplace_back(std::move(p), ContourMask(std::move(contours[i])));
    }
    for (int i = n; i < 2 * n; ++i) {
        Patch p;
        p.values = std::move(noises[i]);
        p.polarity = Polarity::negative;
        out.negatives.push_back(std::move(p));
    }
    return out;
}

nn::Checkpoint baseline_single_gan(const corpus::Corpus& data, gan::WganTrainConfig cfg,
                                   const std::string& failure_path) {
    if (data.positives.empty()) throw FusionError("single-gan baseline needs paired data");
    cfg.channels = 2;
    cfg.g_base *= 2; // doubled hidden widths relative to the stage-1/2 models
    std::vector<std::vector<float>> rows;
    rows.reserve(data.positives.size());
    for (auto& [p, m] : data.positives) {
        std::vector<float> row = p.values.v;
        row.insert(row.end(), m.values.v.begin(), m.values.v.end());
        for (auto& v : row) v = v * 2.f - 1.f; // generator range
        rows.push_back(std::move(row));
    }
    return gan::train_wgan(rows, cfg, "single-gan", failure_path);
}

Grid baseline_random_addition(const Grid& noise, const Grid& mask, float lambda, float sigma,
                              bool blur) {
    Grid out = noise;
    if (!blur) {
        for (size_t i = 0; i < out.v.size(); ++i)
            out.v[i] = std::clamp(out.v[i] + lambda * mask.v[i], 0.f, 1.f);
        return out;
    }
    // separable Gaussian blur of the mask
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<float> k(size_t(2 * radius + 1));
    float norm = 0.f;
    for (int i = -radius; i <= radius; ++i) {
        k[size_t(i + radius)] = std::exp(-float(i * i) / (2.f * sigma * sigma));
        norm += k[size_t(i + radius)];
    }
    for (auto& v : k) v /= norm;

    Grid tmp(mask.rows, mask.cols), blurred(mask.rows, mask.cols);
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c) {
            float acc = 0.f;
            for (int i = -radius; i <= radius; ++i) {
                int cc = c + i;
                if (cc >= 0 && cc < mask.cols) acc += k[size_t(i + radius)] * mask.at(r, cc);
            }
            tmp.at(r, c) = acc;
        }
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c) {
            float acc = 0.f;
            for (int i = -radius; i <= radius; ++i) {
                int rr = r + i;
                if (rr >= 0 && rr < mask.rows) acc += k[size_t(i + radius)] * tmp.at(rr, c);
            }
            blurred.at(r, c) = acc;
        }
    for (size_t i = 0; i < out.v.size(); ++i) {
        float ridge = std::clamp(mask.v[i] + blurred.v[i], 0.f, 1.f);
        out.v[i] = std::clamp(out.v[i] + lambda * ridge, 0.f, 1.f);
    }
    return out;
}

} // namespace waswhistle::fusion
