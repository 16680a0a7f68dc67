#include "waswhistle/extractor.hpp"

#include <algorithm>
#include <cmath>

#include "waswhistle/config.hpp"
#include "waswhistle/io.hpp"

namespace waswhistle::extractor {

using namespace waswhistle::nn;

ExtractorNet::ExtractorNet(int width_, bool abn_, Rng& rng) : width(width_), abn(abn_) {
    stem = Conv2d(1, width, 5, 1, 2, rng);
    blocks.resize(4);
    for (auto& b : blocks) {
        b.bn_a = BatchNorm2d(width);
        b.conv_a = Conv2d(width, width, 3, 1, 1, rng);
        b.bn_b = BatchNorm2d(width);
        b.conv_b = Conv2d(width, width, 3, 1, 1, rng);
    }
    bn_out = BatchNorm2d(width);
    head = Conv2d(width, 1, 5, 1, 2, rng);
}

Tensor ExtractorNet::forward(const Tensor& x, bool training, Stream stream) {
    if (stream == Stream::generated && !abn)
        throw ExtractorError("generated stream requires auxiliary normalization");
    Tensor h = stem.forward(x);
    for (auto& b : blocks) {
        Tensor t = b.conv_a.forward(relu(b.bn_a.forward(h, training, stream)));
        t = b.conv_b.forward(relu(b.bn_b.forward(t, training, stream)));
        h = add(h, t);
    }
    return sigmoid(head.forward(relu(bn_out.forward(h, training, stream))));
}

void ExtractorNet::collect(NamedParams& out) {
    stem.collect("x.stem", out);
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string p = "x.b" + std::to_string(i);
        blocks[i].bn_a.collect(p + ".bn_a", out);
        blocks[i].conv_a.collect(p + ".conv_a", out);
        blocks[i].bn_b.collect(p + ".bn_b", out);
        blocks[i].conv_b.collect(p + ".conv_b", out);
    }
    bn_out.collect("x.bn_out", out);
    head.collect("x.head", out);
}

void ExtractorNet::collect_buffers(NamedBuffers& out) {
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string p = "x.b" + std::to_string(i);
        blocks[i].bn_a.collect_buffers(p + ".bn_a", out);
        blocks[i].bn_b.collect_buffers(p + ".bn_b", out);
    }
    bn_out.collect_buffers("x.bn_out", out);
}

void ExtractorTrainConfig::validate() const {
    if (lr <= 0 || weight_decay < 0 || batch < 1 || iterations < 0 || decay_every < 1 ||
        abn_lambda < 0 || width < 1)
        throw ExtractorError("invalid extractor config");
}

std::string ExtractorTrainConfig::text() const {
    Config c;
    c.set_double("extractor.lr", lr);
    c.set_double("extractor.beta1", beta1);
    c.set_double("extractor.beta2", beta2);
    c.set_double("extractor.weight_decay", weight_decay);
    c.set_int("extractor.batch", batch);
    c.set_int("extractor.iterations", iterations);
    c.set_int("extractor.decay_every", decay_every);
    c.set_double("extractor.abn_lambda", abn_lambda);
    c.set_int("extractor.width", width);
    c.set("extractor.seed", std::to_string(seed));
    c.set("extractor.loss", "root-sum-square-per-patch-batch-mean");
    return c.text();
}

ExtractorTrainConfig extractor_config_from_text(const std::string& text) {
    Config c = Config::parse(text);
    ExtractorTrainConfig cfg;
    cfg.lr = float(c.get_double("extractor.lr"));
    cfg.beta1 = float(c.get_double("extractor.beta1"));
    cfg.beta2 = float(c.get_double("extractor.beta2"));
    cfg.weight_decay = float(c.get_double("extractor.weight_decay"));
    cfg.batch = int(c.get_int("extractor.batch"));
    cfg.iterations = int(c.get_int("extractor.iterations"));
    cfg.decay_every = int(c.get_int("extractor.decay_every"));
    cfg.abn_lambda = float(c.get_double("extractor.abn_lambda"));
    cfg.width = int(c.get_int("extractor.width"));
    cfg.seed = c.get_u64_or("extractor.seed", 0);
    return cfg;
}

static Tensor rss_loss(const Tensor& pred, const Tensor& y) {
    // root of the per-patch sum of squares, averaged over the batch
    return mean(sqrt_t(sum_per_sample(square(sub(y, pred)))));
}

Tensor loss_plain(ExtractorNet& net, const Tensor& x, const Tensor& y, bool training) {
    if (x.shape() != y.shape()) throw ExtractorError("input/label shape mismatch");
    return rss_loss(net.forward(x, training, Stream::real), y);
}

Tensor loss_abn(ExtractorNet& net, const Tensor& x_real, const Tensor& y_real,
                const Tensor& x_fake, const Tensor& y_fake, float lambda, bool training) {
    if (lambda < 0) throw ExtractorError("abn lambda must be >= 0");
    Tensor l_real = rss_loss(net.forward(x_real, training, Stream::real), y_real);
    if (lambda == 0.f) return l_real;
    Tensor l_fake = rss_loss(net.forward(x_fake, training, Stream::generated), y_fake);
    return scale(add(l_real, scale(l_fake, lambda)), 1.f / (1.f + lambda));
}

namespace {

struct Pool {
    // flattened 64x64 inputs and labels, parallel vectors
    std::vector<const Grid*> x, y;
    Grid zero{kPatchSize, kPatchSize};

    explicit Pool(const corpus::Corpus& c) {
        for (auto& [p, m] : c.positives) {
            x.push_back(&p.values);
            y.push_back(&m.values);
        }
        for (auto& p : c.negatives) {
            x.push_back(&p.values);
            y.push_back(&zero);
        }
    }

    std::pair<Tensor, Tensor> batch(int n, Rng& rng) const {
        std::vector<float> bx, by;
        bx.reserve(size_t(n) * kPatchSize * kPatchSize);
        by.reserve(bx.capacity());
        for (int i = 0; i < n; ++i) {
            size_t j = rng.uniform_int(x.size());
            bx.insert(bx.end(), x[j]->v.begin(), x[j]->v.end());
            by.insert(by.end(), y[j]->v.begin(), y[j]->v.end());
        }
        Shape s{n, 1, kPatchSize, kPatchSize};
        return {Tensor::leaf(s, std::move(bx)), Tensor::leaf(s, std::move(by))};
    }
};

} // namespace

nn::Checkpoint train_extractor(const corpus::Corpus& real, const corpus::Corpus* generated,
                               const ExtractorTrainConfig& cfg, std::vector<float>* loss_curve,
                               const ProgressFn& progress) {
    cfg.validate();
    if (real.positives.empty() && real.negatives.empty())
        throw ExtractorError("empty training corpus");
    const bool abn = generated != nullptr;
    if (abn && generated->positives.empty() && generated->negatives.empty())
        throw ExtractorError("empty generated corpus");

    Rng rng(cfg.seed);
    ExtractorNet net(cfg.width, abn, rng);
    NamedParams params;
    NamedBuffers buffers;
    net.collect(params);
    net.collect_buffers(buffers);
    std::vector<Tensor> tensors;
    for (auto& [_, t] : params) tensors.push_back(t);

    AdamConfig ac;
    ac.lr = cfg.lr;
    ac.beta1 = cfg.beta1;
    ac.beta2 = cfg.beta2;
    ac.weight_decay = cfg.weight_decay;
    Adam opt(ac);

    Pool real_pool(real);
    Pool fake_pool(abn ? *generated : real);

    const std::string kind = abn ? "extractor-abn" : "extractor";
    const std::string cfg_text = cfg.text() + "extractor.abn=" + (abn ? "1" : "0") + "\n";
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        opt.config().lr = cfg.lr * std::pow(0.1f, float(iter / cfg.decay_every));
        auto [xr, yr] = real_pool.batch(cfg.batch, rng);
        Tensor loss;
        if (abn) {
            auto [xf, yf] = fake_pool.batch(cfg.batch, rng);
            loss = loss_abn(net, xr, yr, xf, yf, cfg.abn_lambda, true);
        } else {
            loss = loss_plain(net, xr, yr, true);
        }
        float lv = loss.item();
        if (!std::isfinite(lv))
            throw ExtractorError("loss diverged at iteration " + std::to_string(iter));
        if (loss_curve) loss_curve->push_back(lv);
        opt.step(params, grad(loss, tensors));
        if (progress && (iter % cfg.log_every == 0 || iter + 1 == cfg.iterations))
            progress(iter, lv);
    }
    return snapshot(kind, cfg_text, params, buffers, &opt, uint64_t(cfg.iterations), rng);
}

ExtractorNet extractor_from_checkpoint(const nn::Checkpoint& ckpt) {
    Config c = Config::parse(ckpt.config_text);
    Rng rng(0);
    ExtractorNet net(int(c.get_int("extractor.width")), c.get_int_or("extractor.abn", 0) != 0,
                     rng);
    NamedParams params;
    NamedBuffers buffers;
    net.collect(params);
    net.collect_buffers(buffers);
    assign_params(ckpt, params);
    assign_buffers(ckpt, buffers);
    return net;
}

Grid infer_patch(ExtractorNet& net, const Grid& patch) {
    Tensor x = Tensor::leaf({1, 1, patch.rows, patch.cols}, patch.v);
    Tensor y = net.forward(x, false, Stream::real);
    Grid out(patch.rows, patch.cols);
    out.v = y.data();
    return out;
}

Grid infer_spectrogram(const nn::Checkpoint& ckpt, const NormalizedSpectrogram& s) {
    const int frames = s.num_frames(), bins = s.num_bins();
    if (frames < kPatchSize) throw ExtractorError("spectrogram too short for inference");
    ExtractorNet net = extractor_from_checkpoint(ckpt);

    const int window = 1024, overlap = 32;
    Grid out(frames, bins, -1.f);
    int start = 0;
    while (true) {
        int len = std::min(window, frames - start);
        Grid piece(len, bins);
        std::copy(s.values.v.begin() + size_t(start) * bins,
                  s.values.v.begin() + size_t(start + len) * bins, piece.v.begin());
        Grid conf = infer_patch(net, piece);
        for (int r = 0; r < len; ++r)
            for (int c = 0; c < bins; ++c)
                out.at(start + r, c) = std::max(out.at(start + r, c), conf.at(r, c));
        if (start + len >= frames) break;
        start += window - overlap;
    }
    return out;
}

} // namespace waswhistle::extractor
