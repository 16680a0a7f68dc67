#include "waswhistle/nn.hpp"

#include <cmath>

namespace waswhistle::nn {

void init_gaussian(Tensor& t, Rng& rng, float sigma) {
    for (auto& v : t.data()) v = float(rng.normal(0.0, sigma));
}

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
    w = Tensor::zeros({out_ch, in_ch, kernel, kernel}, true);
    b = Tensor::zeros({out_ch}, true);
    init_gaussian(w, rng);
}

void Conv2d::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel_, int stride_, int pad_,
                                 Rng& rng)
    : stride(stride_), pad(pad_), kernel(kernel_) {
    w = Tensor::zeros({in_ch, out_ch, kernel_, kernel_}, true);
    b = Tensor::zeros({out_ch}, true);
    init_gaussian(w, rng);
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
    const int h = x.shape()[2], w_in = x.shape()[3];
    const int oh = (h - 1) * stride + kernel - 2 * pad;
    const int ow = (w_in - 1) * stride + kernel - 2 * pad;
    return bias_add(conv2d_input_grad(x, w, stride, pad, oh, ow), b);
}

void ConvTranspose2d::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

Linear::Linear(int in, int out, Rng& rng) {
    w = Tensor::zeros({in, out}, true);
    b = Tensor::zeros({out}, true);
    init_gaussian(w, rng);
}

void Linear::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

BatchNorm2d::BatchNorm2d(int channels) {
    gamma = Tensor::leaf({channels}, std::vector<float>(size_t(channels), 1.f), true);
    beta = Tensor::zeros({channels}, true);
    run_mean_main.assign(size_t(channels), 0.f);
    run_var_main.assign(size_t(channels), 1.f);
    run_mean_aux.assign(size_t(channels), 0.f);
    run_var_aux.assign(size_t(channels), 1.f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training, Stream stream) {
    const int c = x.shape()[1];
    auto& run_mean = stream == Stream::real ? run_mean_main : run_mean_aux;
    auto& run_var = stream == Stream::real ? run_var_main : run_var_aux;
    Tensor xhat;
    if (training) {
        const float inv_count = float(double(c) / double(x.size()));
        Tensor mu = scale(channel_sum(x), inv_count);
        Tensor xc = sub(x, broadcast_c(mu, x.shape()));
        Tensor var = scale(channel_sum(square(xc)), inv_count);
        xhat = div(xc, broadcast_c(sqrt_t(add_scalar(var, eps)), x.shape()));
        for (int i = 0; i < c; ++i) {
            run_mean[size_t(i)] =
                (1.f - momentum) * run_mean[size_t(i)] + momentum * mu.data()[size_t(i)];
            run_var[size_t(i)] =
                (1.f - momentum) * run_var[size_t(i)] + momentum * var.data()[size_t(i)];
        }
    } else {
        std::vector<float> inv_sd(size_t(c), 0.f), mean_neg(size_t(c), 0.f);
        for (int i = 0; i < c; ++i) {
            inv_sd[size_t(i)] = 1.f / std::sqrt(run_var[size_t(i)] + eps);
            mean_neg[size_t(i)] = -run_mean[size_t(i)];
        }
        Tensor m = Tensor::leaf({c}, std::move(mean_neg));
        Tensor s = Tensor::leaf({c}, std::move(inv_sd));
        xhat = mul(add(x, broadcast_c(m, x.shape())), broadcast_c(s, x.shape()));
    }
    return add(mul(xhat, broadcast_c(gamma, x.shape())), broadcast_c(beta, x.shape()));
}

void BatchNorm2d::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

void BatchNorm2d::collect_buffers(const std::string& prefix, NamedBuffers& out) {
    out.emplace_back(prefix + ".run_mean_main", &run_mean_main);
    out.emplace_back(prefix + ".run_var_main", &run_var_main);
    out.emplace_back(prefix + ".run_mean_aux", &run_mean_aux);
    out.emplace_back(prefix + ".run_var_aux", &run_var_aux);
}

InstanceNorm2d::InstanceNorm2d(int channels) {
    gamma = Tensor::leaf({channels}, std::vector<float>(size_t(channels), 1.f), true);
    beta = Tensor::zeros({channels}, true);
}

Tensor InstanceNorm2d::forward(const Tensor& x) const {
    const auto& s = x.shape();
    const float inv_hw = 1.f / float(s[2] * s[3]);
    Tensor mu = scale(instance_sum(x), inv_hw);
    Tensor xc = sub(x, broadcast_nc(mu, s));
    Tensor var = scale(instance_sum(square(xc)), inv_hw);
    Tensor xhat = div(xc, broadcast_nc(sqrt_t(add_scalar(var, eps)), s));
    return add(mul(xhat, broadcast_c(gamma, s)), broadcast_c(beta, s));
}

void InstanceNorm2d::collect(const std::string& prefix, NamedParams& out) {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

void Adam::step(const NamedParams& params, const std::vector<Tensor>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(double(cfg_.beta1), double(t_));
    const double bc2 = 1.0 - std::pow(double(cfg_.beta2), double(t_));
    for (size_t p = 0; p < params.size(); ++p) {
        const auto& [name, param] = params[p];
        auto& [m, v] = mv_[name];
        auto& theta = const_cast<Tensor&>(param).data();
        const auto& g = grads[p].data();
        if (m.size() != theta.size()) {
            m.assign(theta.size(), 0.f);
            v.assign(theta.size(), 0.f);
        }
        for (size_t i = 0; i < theta.size(); ++i) {
            const float gi = g[i] + cfg_.weight_decay * theta[i];
            m[i] = cfg_.beta1 * m[i] + (1.f - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.f - cfg_.beta2) * gi * gi;
            const float mhat = float(m[i] / bc1);
            const float vhat = float(v[i] / bc2);
            theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> Adam::state() const {
    return mv_;
}

void Adam::set_state(std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> s,
                     uint64_t t) {
    mv_ = std::move(s);
    t_ = t;
}

bool all_finite(const Tensor& t) {
    for (float v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace waswhistle::nn
