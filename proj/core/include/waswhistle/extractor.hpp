#pragma once
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/checkpoint.hpp"
#include "waswhistle/corpus.hpp"
#include "waswhistle/grid.hpp"
#include "waswhistle/nn.hpp"
#include "waswhistle/rng.hpp"

namespace waswhistle::extractor {

struct ExtractorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 10 convolutions: k5 stem, 4 pre-activation residual blocks of two k3
// convolutions each, k5 sigmoid head. Fully convolutional, so it runs on
// 64x64 patches and whole spectrograms alike. When `abn` is set every
// normalization layer keeps a second set of running statistics for the
// generated-data stream while sharing weights with the real stream.
struct ExtractorNet {
    int width = 32;
    bool abn = false;
    nn::Conv2d stem, head;
    struct Block {
        nn::BatchNorm2d bn_a, bn_b;
        nn::Conv2d conv_a, conv_b;
    };
    std::vector<Block> blocks;
    nn::BatchNorm2d bn_out;

    ExtractorNet() = default;
    ExtractorNet(int width, bool abn, Rng& rng);

    // x: [N,1,H,W] -> [N,1,H,W] in (0,1)
    nn::Tensor forward(const nn::Tensor& x, bool training, nn::Stream stream = nn::Stream::real);
    void collect(nn::NamedParams& out);
    void collect_buffers(nn::NamedBuffers& out);
};

struct ExtractorTrainConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float weight_decay = 5e-4f;
    int batch = 64;
    int iterations = 300000;
    int decay_every = 100000; // lr x0.1 at each multiple
    float abn_lambda = 1.f;
    int width = 32;
    uint64_t seed = 0;
    int log_every = 200;

    void validate() const;
    std::string text() const;
};

ExtractorTrainConfig extractor_config_from_text(const std::string& text);

// mean over the batch of the per-sample root-sum-square error ||y - f(x)||_2
nn::Tensor loss_plain(ExtractorNet& net, const nn::Tensor& x, const nn::Tensor& y, bool training);

// (1/(1+lambda)) * (||y_r - f(x_r)||_2 + lambda * ||y_f - f_abn(x_f)||_2)
nn::Tensor loss_abn(ExtractorNet& net, const nn::Tensor& x_real, const nn::Tensor& y_real,
                    const nn::Tensor& x_fake, const nn::Tensor& y_fake, float lambda,
                    bool training);

using ProgressFn = std::function<void(int iter, float loss)>;

// plain training when `generated` is null, otherwise dual-stream training
// with 64 real + 64 generated samples per iteration
nn::Checkpoint train_extractor(const corpus::Corpus& real, const corpus::Corpus* generated,
                               const ExtractorTrainConfig& cfg,
                               std::vector<float>* loss_curve = nullptr,
                               const ProgressFn& progress = nullptr);

ExtractorNet extractor_from_checkpoint(const nn::Checkpoint& ckpt);

// confidence for one 64x64 grid (eval mode, real stream)
Grid infer_patch(ExtractorNet& net, const Grid& patch);

// whole-recording inference: 1024-frame windows with 32-frame overlap,
// overlaps resolved by taking the maximum
Grid infer_spectrogram(const nn::Checkpoint& ckpt, const NormalizedSpectrogram& s);

} // namespace waswhistle::extractor
