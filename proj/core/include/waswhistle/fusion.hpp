#pragma once
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/checkpoint.hpp"
#include "waswhistle/contour_filter.hpp"
#include "waswhistle/corpus.hpp"
#include "waswhistle/extractor.hpp"
#include "waswhistle/gan.hpp"
#include "waswhistle/grid.hpp"
#include "waswhistle/nn.hpp"

namespace waswhistle::fusion {

struct FusionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Encoder-decoder with skip connections: three stride-2 halvings and three
// mirrored upsamplings (6 blocks), instance normalization throughout,
// unconstrained linear head (residual output).
struct UNet {
    int base = 64;
    int in_ch = 2, out_ch = 1;
    nn::Conv2d d1, d2, d3;
    nn::InstanceNorm2d n1, n2, n3;
    nn::ConvTranspose2d u1, u2, u3;
    nn::InstanceNorm2d m1, m2, m3;
    nn::Conv2d head;

    UNet() = default;
    UNet(int in_ch, int out_ch, int base, Rng& rng);
    nn::Tensor forward(const nn::Tensor& x) const;
    void collect(const std::string& prefix, nn::NamedParams& out);
};

// 3-layer fully convolutional least-squares discriminator; emits a score map
struct PatchDiscriminator {
    int base = 64;
    nn::Conv2d c1, c2, c3;
    nn::InstanceNorm2d n2;

    PatchDiscriminator() = default;
    PatchDiscriminator(int in_ch, int base, Rng& rng);
    nn::Tensor forward(const nn::Tensor& x) const;
    void collect(const std::string& prefix, nn::NamedParams& out);
};

struct FusionNets {
    UNet g_a;                    // (noise, contour) -> 1-channel residual
    UNet g_b;                    // positive -> (noise, contour) estimate
    PatchDiscriminator d_a;      // positives
    PatchDiscriminator d_b_noise, d_b_contour; // marginals of domain A
    nn::NamedParams g_params, d_params;
};

struct FusionConfig {
    float lambda_cycle = 10.f;
    float lambda_consistency = 0.5f;
    float lambda_identity = 0.5f;
    float gamma_lo = 0.5f, gamma_hi = 1.5f;
    float lr = 2e-4f;
    float beta1 = 0.5f, beta2 = 0.999f;
    int batch = 64;
    int iterations = 25120;
    int g_base = 64;   // U-Net width
    int d_base = 64;   // discriminator width
    int pool = 2048;   // domain-A samples pre-generated from stage-1/2 models
    bool residual = true; // false: G_A emits the positive directly (ablation)
    filter::FilterThresholds thresholds; // gate on the stage-2 contour pool
    uint64_t seed = 0;
    int log_every = 50;

    void validate() const;
    std::string text() const;
};

FusionConfig fusion_config_from_text(const std::string& text);

FusionNets build_fusion(const FusionConfig& cfg, Rng& rng);
FusionNets fusion_from_checkpoint(const nn::Checkpoint& ckpt);

// I_P' = noise + gamma * G_A(noise, contour); unclipped (losses are pre-clip).
// With residual=false the generator output is the positive itself.
nn::Tensor compose_positive(const UNet& g_a, const nn::Tensor& noise, const nn::Tensor& contour,
                            const nn::Tensor& gamma, bool residual = true);
Grid compose_positive_grid(const UNet& g_a, const Grid& noise, const Grid& contour, float gamma,
                           bool clip = true, bool residual = true);

// mean over batch of per-sample L1 distance ||f(composed) - contour||_1;
// the extractor is frozen: gradients flow only through its input
nn::Tensor consistency_loss(extractor::ExtractorNet& f, const nn::Tensor& composed,
                            const nn::Tensor& contour);

// ||G_A(noise, 0)||_1 + ||G_B(noise) - (noise, 0)||_1, batch-mean of per-sample
// sums; without residual output the first term targets the noise itself
nn::Tensor identity_loss(const UNet& g_a, const UNet& g_b, const nn::Tensor& noise,
                         bool residual = true);

struct FusionLossReport {
    float adv_g_a = 0, adv_g_b = 0, cycle = 0, consistency = 0, identity = 0;
    float total_g = 0, total_d = 0;
};

// least-squares adversarial + cycle terms; batch_* tensors hold one sample
// per row. Returns (L_G, L_D) with per-term values in `report`.
std::pair<nn::Tensor, nn::Tensor> adversarial_and_cycle_losses(
    FusionNets& nets, extractor::ExtractorNet& consistency_model, const nn::Tensor& a_noise,
    const nn::Tensor& a_contour, const nn::Tensor& b_positive, const nn::Tensor& gamma,
    const FusionConfig& cfg, FusionLossReport* report = nullptr);

using ProgressFn = std::function<void(int iter, const FusionLossReport&)>;

nn::Checkpoint train_fusion(const corpus::Corpus& real, const nn::Checkpoint& noise_ckpt,
                            const nn::Checkpoint& contour_ckpt,
                            const nn::Checkpoint& extractor_ckpt, const FusionConfig& cfg,
                            const std::string& failure_path = "",
                            const ProgressFn& progress = nullptr);

// n filtered (noise, contour, composed) triples plus n generated negatives;
// throws "contour model degenerate" when the filter pass-rate drops below 5%
corpus::Corpus generate_training_set(const nn::Checkpoint& noise_ckpt,
                                     const nn::Checkpoint& contour_ckpt,
                                     const nn::Checkpoint& fusion_ckpt,
                                     const filter::FilterThresholds& th, int n, uint64_t seed,
                                     std::vector<filter::FilterDecision>* audit = nullptr);

// ablation: one WGAN-gp emitting (sample, label) pairs, generator widths doubled
nn::Checkpoint baseline_single_gan(const corpus::Corpus& data, gan::WganTrainConfig cfg,
                                   const std::string& failure_path = "");

// ablation: additive mask injection, optionally Gaussian-blurred (clipped mask)
Grid baseline_random_addition(const Grid& noise, const Grid& mask, float lambda, float sigma,
                              bool blur);

} // namespace waswhistle::fusion
