#pragma once
#include <map>
#include <string>
#include <vector>

#include "waswhistle/rng.hpp"
#include "waswhistle/tensor.hpp"

namespace waswhistle::nn {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;
using NamedBuffers = std::vector<std::pair<std::string, std::vector<float>*>>;

// zero-mean Gaussian init, sigma 0.02 unless stated otherwise
void init_gaussian(Tensor& t, Rng& rng, float sigma = 0.02f);

enum class Stream { real, generated };

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);
    Tensor forward(const Tensor& x) const { return bias_add(conv2d(x, w, stride, pad), b); }
    void collect(const std::string& prefix, NamedParams& out);
};

struct ConvTranspose2d {
    Tensor w, b; // w: [in_ch, out_ch, k, k]
    int stride = 2, pad = 1, kernel = 4;

    ConvTranspose2d() = default;
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out);
};

struct Linear {
    Tensor w, b; // w: [in, out]

    Linear() = default;
    Linear(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x) const { return bias_add(matmul(x, w), b); }
    void collect(const std::string& prefix, NamedParams& out);
};

// BatchNorm with optional auxiliary statistics: the `generated` stream keeps
// its own running mean/var while sharing the affine parameters and, through
// them, the surrounding convolutions.
struct BatchNorm2d {
    Tensor gamma, beta;
    std::vector<float> run_mean_main, run_var_main;
    std::vector<float> run_mean_aux, run_var_aux;
    float momentum = 0.1f;
    float eps = 1e-5f;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels);
    Tensor forward(const Tensor& x, bool training, Stream stream = Stream::real);
    void collect(const std::string& prefix, NamedParams& out);
    void collect_buffers(const std::string& prefix, NamedBuffers& out);
};

struct InstanceNorm2d {
    Tensor gamma, beta;
    float eps = 1e-5f;

    InstanceNorm2d() = default;
    explicit InstanceNorm2d(int channels);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out);
};

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.f;
};

class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    AdamConfig& config() { return cfg_; }
    const AdamConfig& config() const { return cfg_; }
    uint64_t steps() const { return t_; }

    // params and grads are parallel lists; grads may carry graph history,
    // only their data is read
    void step(const NamedParams& params, const std::vector<Tensor>& grads);

    // serialization
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> state() const;
    void set_state(std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> s,
                   uint64_t t);

private:
    AdamConfig cfg_;
    uint64_t t_ = 0;
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> mv_;
};

// non-finite scan used by the training loops' divergence aborts
bool all_finite(const Tensor& t);

} // namespace waswhistle::nn
