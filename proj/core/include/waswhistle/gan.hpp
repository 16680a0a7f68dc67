#pragma once
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/checkpoint.hpp"
#include "waswhistle/grid.hpp"
#include "waswhistle/nn.hpp"
#include "waswhistle/rng.hpp"

namespace waswhistle::gan {

struct GanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 128 -> (8*base,4,4) -> four conv + pixel-shuffle doublings -> 64x64 tanh.
// base = 64 gives the 512-256-128-64-32 channel schedule; smaller bases
// keep the same shape at a fraction of the cost.
struct GeneratorNet {
    static constexpr int kLatent = 128;
    int base = 64;
    int channels = 1;
    nn::Linear fc;
    std::vector<nn::Conv2d> ups; // each conv emits 4x channels, shuffle halves twice
    nn::Conv2d head;

    GeneratorNet() = default;
    GeneratorNet(int base, int channels, Rng& rng);
    // z: [N,128] -> [N,channels,64,64] in (-1,1)
    nn::Tensor forward(const nn::Tensor& z) const;
    void collect(nn::NamedParams& out);
};

// 4 stride-2 convolutions + scalar head; deliberately normalization-free so
// the interpolated-sample gradient stays per-sample independent.
struct DiscriminatorNet {
    int base = 64;
    int channels = 1;
    std::vector<nn::Conv2d> convs;
    nn::Linear fc;

    DiscriminatorNet() = default;
    DiscriminatorNet(int base, int channels, Rng& rng);
    // x: [N,channels,64,64] -> [N]
    nn::Tensor forward(const nn::Tensor& x) const;
    void collect(nn::NamedParams& out);
};

struct WganTrainConfig {
    float lr = 1e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.9f;
    int batch = 64;
    int d_steps_per_g_step = 5;
    int iterations = 30000; // generator updates
    float gp_weight = 10.f;
    int g_base = 64;
    int d_base = 64;
    int channels = 1;
    uint64_t seed = 0;
    int log_every = 100;

    void validate() const;
    std::string text() const; // canonical key=value block for digests
};

struct WganModel {
    GeneratorNet g;
    DiscriminatorNet d;
    nn::NamedParams params; // g.* then d.*
};

WganModel build_wgan(const WganTrainConfig& cfg, Rng& init_rng);
WganModel wgan_from_checkpoint(const nn::Checkpoint& ckpt);

// mean over the batch of (||d/dxhat D(xhat)||_2 - 1)^2, xhat = eps*x + (1-eps)*xfake;
// the generic overload lets tests use closed-form scorers
using ScoreFn = std::function<nn::Tensor(const nn::Tensor&)>; // [N,...] -> [N]
nn::Tensor gradient_penalty(const ScoreFn& score, const nn::Tensor& real, const nn::Tensor& fake,
                            Rng& rng);
nn::Tensor gradient_penalty(const DiscriminatorNet& d, const nn::Tensor& real,
                            const nn::Tensor& fake, Rng& rng);

nn::Tensor d_loss(const DiscriminatorNet& d, const GeneratorNet& g, const nn::Tensor& real,
                  const WganTrainConfig& cfg, Rng& rng);
nn::Tensor g_loss(const DiscriminatorNet& d, const GeneratorNet& g, int batch, Rng& rng);

// standard-normal latent batch [n,128]
nn::Tensor sample_latent(int n, Rng& rng);

using ProgressFn = std::function<void(int iter, float d_loss, float g_loss)>;

// data rows are flattened 64x64[xC] grids; training is one logical sequence,
// 5 discriminator updates per generator update. On divergence the checkpoint
// at failure is written to `failure_path` (if nonempty) before throwing.
nn::Checkpoint train_wgan(const std::vector<std::vector<float>>& data, const WganTrainConfig& cfg,
                          const std::string& kind, const std::string& failure_path = "",
                          const ProgressFn& progress = nullptr);

// n samples from a generator checkpoint, (tanh+1)/2 rescaled into [0,1];
// one 64x64 grid per channel per sample
std::vector<std::vector<Grid>> sample(const nn::Checkpoint& ckpt, int n, uint64_t seed);

} // namespace waswhistle::gan
