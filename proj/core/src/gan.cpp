#include "waswhistle/gan.hpp"

#include <cmath>
#include <cstdio>

#include "waswhistle/config.hpp"
#include "waswhistle/io.hpp"

namespace waswhistle::gan {

using namespace waswhistle::nn;

GeneratorNet::GeneratorNet(int base_, int channels_, Rng& rng)
    : base(base_), channels(channels_) {
    fc = Linear(kLatent, 8 * base * 4 * 4, rng);
    // 8b@4x4 -> 4b@8x8 -> 2b@16x16 -> b@32x32 -> b/2@64x64
    int c = 8 * base;
    for (int i = 0; i < 4; ++i) {
        ups.emplace_back(c, 2 * c, 3, 1, 1, rng); // 4x the post-shuffle channel count
        c /= 2;
    }
    head = Conv2d(c, channels, 3, 1, 1, rng);
}

Tensor GeneratorNet::forward(const Tensor& z) const {
    const int n = z.shape()[0];
    Tensor h = relu(reshape(fc.forward(z), {n, 8 * base, 4, 4}));
    for (auto& up : ups) h = relu(pixel_shuffle(up.forward(h), 2));
    return tanh_t(head.forward(h));
}

void GeneratorNet::collect(NamedParams& out) {
    fc.collect("g.fc", out);
    for (size_t i = 0; i < ups.size(); ++i) ups[i].collect("g.up" + std::to_string(i), out);
    head.collect("g.head", out);
}

DiscriminatorNet::DiscriminatorNet(int base_, int channels_, Rng& rng)
    : base(base_), channels(channels_) {
    int c = channels;
    int f = base;
    for (int i = 0; i < 4; ++i) { // 64 -> 32 -> 16 -> 8 -> 4
        convs.emplace_back(c, f, 4, 2, 1, rng);
        c = f;
        f *= 2;
    }
    fc = Linear(c * 4 * 4, 1, rng);
}

Tensor DiscriminatorNet::forward(const Tensor& x) const {
    Tensor h = x;
    for (auto& cv : convs) h = leaky_relu(cv.forward(h), 0.2f);
    const int n = h.shape()[0];
    int flat = h.shape()[1] * h.shape()[2] * h.shape()[3];
    return reshape(fc.forward(reshape(h, {n, flat})), {n});
}

void DiscriminatorNet::collect(NamedParams& out) {
    for (size_t i = 0; i < convs.size(); ++i) convs[i].collect("d.conv" + std::to_string(i), out);
    fc.collect("d.fc", out);
}

void WganTrainConfig::validate() const {
    if (lr <= 0 || beta1 < 0 || beta2 < 0 || batch < 1 || d_steps_per_g_step < 1 ||
        iterations < 0 || gp_weight < 0 || g_base < 2 || d_base < 1 || channels < 1)
        throw GanError("invalid wgan config");
}

std::string WganTrainConfig::text() const {
    Config c;
    c.set_double("wgan.lr", lr);
    c.set_double("wgan.beta1", beta1);
    c.set_double("wgan.beta2", beta2);
    c.set_int("wgan.batch", batch);
    c.set_int("wgan.d_steps", d_steps_per_g_step);
    c.set_int("wgan.iterations", iterations);
    c.set_double("wgan.gp_weight", gp_weight);
    c.set_int("wgan.g_base", g_base);
    c.set_int("wgan.d_base", d_base);
    c.set_int("wgan.channels", channels);
    c.set("wgan.seed", std::to_string(seed));
    return c.text();
}

static WganTrainConfig config_from_text(const std::string& text) {
    Config c = Config::parse(text);
    WganTrainConfig cfg;
    cfg.lr = float(c.get_double("wgan.lr"));
    cfg.beta1 = float(c.get_double("wgan.beta1"));
    cfg.beta2 = float(c.get_double("wgan.beta2"));
    cfg.batch = int(c.get_int("wgan.batch"));
    cfg.d_steps_per_g_step = int(c.get_int("wgan.d_steps"));
    cfg.iterations = int(c.get_int("wgan.iterations"));
    cfg.gp_weight = float(c.get_double("wgan.gp_weight"));
    cfg.g_base = int(c.get_int("wgan.g_base"));
    cfg.d_base = int(c.get_int("wgan.d_base"));
    cfg.channels = int(c.get_int("wgan.channels"));
    cfg.seed = c.get_u64_or("wgan.seed", 0);
    return cfg;
}

WganModel build_wgan(const WganTrainConfig& cfg, Rng& init_rng) {
    WganModel m;
    m.g = GeneratorNet(cfg.g_base, cfg.channels, init_rng);
    m.d = DiscriminatorNet(cfg.d_base, cfg.channels, init_rng);
    m.g.collect(m.params);
    m.d.collect(m.params);
    return m;
}

WganModel wgan_from_checkpoint(const Checkpoint& ckpt) {
    WganTrainConfig cfg = config_from_text(ckpt.config_text);
    Rng rng(0); // weights are overwritten below
    WganModel m = build_wgan(cfg, rng);
    assign_params(ckpt, m.params);
    return m;
}

Tensor sample_latent(int n, Rng& rng) {
    std::vector<float> z(size_t(n) * GeneratorNet::kLatent, 0.f);
    for (auto& v : z) v = float(rng.normal());
    return Tensor::leaf({n, GeneratorNet::kLatent}, std::move(z));
}

Tensor gradient_penalty(const ScoreFn& score, const Tensor& real, const Tensor& fake, Rng& rng) {
    const int n = real.shape()[0];
    std::vector<float> eps(size_t(n), 0.f);
    for (auto& e : eps) e = float(rng.uniform());
    Tensor eps_t = broadcast_n(Tensor::leaf({n}, eps), real.shape());
    std::vector<float> one_m(size_t(n), 0.f);
    for (int i = 0; i < n; ++i) one_m[i] = 1.f - eps[i];
    Tensor inv_t = broadcast_n(Tensor::leaf({n}, one_m), real.shape());

    Tensor mixed = add(mul(eps_t, real.detach()), mul(inv_t, fake.detach()));
    Tensor xhat = Tensor::leaf(mixed.shape(), mixed.data(), true);
    // the discriminator output is per-sample, so the gradient of the sum
    // w.r.t. xhat is the stack of per-sample gradients
    Tensor out = sum(score(xhat));
    Tensor gx = grad(out, {xhat}, /*create_graph=*/true)[0];
    if (!all_finite(gx)) throw GanError("penalty diverged");
    Tensor nrm = sqrt_t(sum_per_sample(square(gx)));
    return mean(square(add_scalar(nrm, -1.f)));
}

Tensor gradient_penalty(const DiscriminatorNet& d, const Tensor& real, const Tensor& fake,
                        Rng& rng) {
    return gradient_penalty([&](const Tensor& x) { return d.forward(x); }, real, fake, rng);
}

Tensor d_loss(const DiscriminatorNet& d, const GeneratorNet& g, const Tensor& real,
              const WganTrainConfig& cfg, Rng& rng) {
    Tensor fake = g.forward(sample_latent(real.shape()[0], rng)).detach();
    Tensor w_term = sub(mean(d.forward(fake)), mean(d.forward(real)));
    Tensor gp = gradient_penalty(d, real, fake, rng);
    return add(w_term, scale(gp, cfg.gp_weight));
}

Tensor g_loss(const DiscriminatorNet& d, const GeneratorNet& g, int batch, Rng& rng) {
    Tensor fake = g.forward(sample_latent(batch, rng));
    return mean(neg(d.forward(fake)));
}

static Tensor make_batch(const std::vector<std::vector<float>>& data, int batch, int channels,
                         Rng& rng) {
    std::vector<float> buf;
    buf.reserve(size_t(batch) * channels * kPatchSize * kPatchSize);
    for (int i = 0; i < batch; ++i) {
        const auto& row = data[rng.uniform_int(data.size())];
        buf.insert(buf.end(), row.begin(), row.end());
    }
    return Tensor::leaf({batch, channels, kPatchSize, kPatchSize}, std::move(buf));
}

static Checkpoint wgan_checkpoint(const WganTrainConfig& cfg, WganModel& m, const Adam& d_opt,
                                  const Adam& g_opt, uint64_t iter, const Rng& rng,
                                  const std::string& kind) {
    Checkpoint ck;
    ck.kind = kind;
    ck.config_text = cfg.text();
    ck.config_digest = fnv1a(ck.config_text);
    ck.iteration = iter;
    for (auto& [name, t] : m.params)
        ck.params.emplace_back(name, Tensor::leaf(t.shape(), t.data()));
    for (auto& [k, v] : g_opt.state()) ck.opt_state["g/" + k] = v;
    for (auto& [k, v] : d_opt.state()) ck.opt_state["d/" + k] = v;
    ck.adam_steps = g_opt.steps();
    ck.buffers["opt/d_steps"] = {float(d_opt.steps())};
    rng.state(ck.rng_state);
    return ck;
}

nn::Checkpoint train_wgan(const std::vector<std::vector<float>>& data, const WganTrainConfig& cfg,
                          const std::string& kind, const std::string& failure_path,
                          const ProgressFn& progress) {
    cfg.validate();
    if (int(data.size()) < cfg.batch) throw GanError("need at least one batch of training data");
    const size_t row = size_t(cfg.channels) * kPatchSize * kPatchSize;
    for (auto& r : data)
        if (r.size() != row) throw GanError("training row has wrong size");

    Rng rng(cfg.seed);
    WganModel m = build_wgan(cfg, rng);

    NamedParams g_params, d_params;
    m.g.collect(g_params);
    m.d.collect(d_params);
    std::vector<Tensor> g_tensors, d_tensors;
    for (auto& [_, t] : g_params) g_tensors.push_back(t);
    for (auto& [_, t] : d_params) d_tensors.push_back(t);

    AdamConfig ac;
    ac.lr = cfg.lr;
    ac.beta1 = cfg.beta1;
    ac.beta2 = cfg.beta2;
    Adam g_opt(ac), d_opt(ac);

    float last_d = 0.f, last_g = 0.f;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        try {
            for (int s = 0; s < cfg.d_steps_per_g_step; ++s) {
                Tensor real = make_batch(data, cfg.batch, cfg.channels, rng);
                Tensor dl = d_loss(m.d, m.g, real, cfg, rng);
                last_d = dl.item();
                if (!std::isfinite(last_d))
                    throw GanError("discriminator loss diverged at iteration " +
                                   std::to_string(iter) + " (value " + std::to_string(last_d) +
                                   ")");
                d_opt.step(d_params, grad(dl, d_tensors));
            }
            Tensor gl = g_loss(m.d, m.g, cfg.batch, rng);
            last_g = gl.item();
            if (!std::isfinite(last_g))
                throw GanError("generator loss diverged at iteration " + std::to_string(iter) +
                               " (value " + std::to_string(last_g) + ")");
            g_opt.step(g_params, grad(gl, g_tensors));
        } catch (const GanError&) {
            if (!failure_path.empty())
                save_checkpoint(failure_path,
                                wgan_checkpoint(cfg, m, d_opt, g_opt, iter, rng, kind));
            throw;
        }
        if (progress && (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations))
            progress(iter, last_d, last_g);
    }
    return wgan_checkpoint(cfg, m, d_opt, g_opt, cfg.iterations, rng, kind);
}

std::vector<std::vector<Grid>> sample(const Checkpoint& ckpt, int n, uint64_t seed) {
    if (n < 1) throw GanError("sample count must be >= 1");
    WganModel m = wgan_from_checkpoint(ckpt);
    const int channels = m.g.channels;
    Rng rng(seed);
    std::vector<std::vector<Grid>> out;
    out.reserve(n);
    int done = 0;
    while (done < n) {
        int b = std::min(64, n - done);
        Tensor y = m.g.forward(sample_latent(b, rng));
        const auto& d = y.data();
        for (int i = 0; i < b; ++i) {
            std::vector<Grid> chans;
            for (int c = 0; c < channels; ++c) {
                Grid g(kPatchSize, kPatchSize);
                size_t off = (size_t(i) * channels + c) * kPatchSize * kPatchSize;
                for (size_t j = 0; j < g.v.size(); ++j) g.v[j] = (d[off + j] + 1.f) * 0.5f;
                chans.push_back(std::move(g));
            }
            out.push_back(std::move(chans));
        }
        done += b;
    }
    return out;
}

} // namespace waswhistle::gan
