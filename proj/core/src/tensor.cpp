#include "waswhistle/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace waswhistle::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

size_t numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= size_t(d);
    return n;
}

static void check(bool ok, const char* msg) {
    if (!ok) throw TensorError(msg);
}

Tensor Tensor::leaf(Shape shape, std::vector<float> data, bool requires_grad) {
    check(numel(shape) == data.size(), "leaf: shape/data mismatch");
    Tensor t;
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::make_shared<std::vector<float>>(std::move(data));
    n->requires_grad = requires_grad;
    t.n_ = std::move(n);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return leaf(shape, std::vector<float>(numel(shape), 0.f), requires_grad);
}

Tensor Tensor::full(Shape shape, float value) {
    return leaf(shape, std::vector<float>(numel(shape), value), false);
}

float Tensor::item() const {
    check(size() == 1, "item: tensor is not scalar");
    return (*n_->data)[0];
}

Tensor Tensor::detach() const {
    Tensor t;
    auto n = std::make_shared<Node>();
    n->shape = n_->shape;
    n->data = n_->data; // shared storage
    n->requires_grad = false;
    t.n_ = std::move(n);
    return t;
}

Tensor Tensor::make(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                    std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> backward) {
    check(numel(shape) == data.size(), "make: shape/data mismatch");
    Tensor t;
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::make_shared<std::vector<float>>(std::move(data));
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    t.n_ = std::move(n);
    return t;
}

// --- autograd driver ----------------------------------------------------------

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph) {
    check(output.defined() && output.size() == 1, "grad: output must be a scalar");

    // topological order over the requires_grad subgraph
    std::vector<Node*> topo;
    std::unordered_map<Node*, Tensor> holder; // keeps Tensors alive by node
    {
        std::unordered_set<Node*> visited;
        std::vector<std::pair<Tensor, bool>> stack{{output, false}};
        while (!stack.empty()) {
            auto [t, expanded] = stack.back();
            stack.pop_back();
            Node* node = t.node();
            if (expanded) {
                topo.push_back(node);
                continue;
            }
            if (visited.count(node) || !node->requires_grad) continue;
            visited.insert(node);
            holder.emplace(node, t);
            stack.push_back({t, true});
            for (const auto& p : node->parents)
                if (p.defined() && p.requires_grad() && !visited.count(p.node()))
                    stack.push_back({p, false});
        }
    }

    std::unordered_map<Node*, Tensor> gmap;
    gmap[output.node()] = Tensor::full(output.shape(), 1.f);

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        auto git = gmap.find(node);
        if (git == gmap.end()) continue;
        if (!node->backward) continue; // leaf
        const Tensor& self = holder.at(node);
        std::vector<Tensor> pgrads = node->backward(self, git->second);
        check(pgrads.size() == node->parents.size(), "grad: backward arity mismatch");
        for (size_t i = 0; i < pgrads.size(); ++i) {
            const Tensor& p = node->parents[i];
            if (!p.defined() || !p.requires_grad() || !pgrads[i].defined()) continue;
            auto pit = gmap.find(p.node());
            if (pit == gmap.end())
                gmap[p.node()] = pgrads[i];
            else
                pit->second = add(pit->second, pgrads[i]);
        }
    }

    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) {
        auto it = gmap.find(in.node());
        Tensor g = it != gmap.end() ? it->second : Tensor::zeros(in.shape());
        out.push_back(create_graph ? g : g.detach());
    }
    return out;
}

// --- elementwise ---------------------------------------------------------------

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw TensorError(std::string(op) + ": shape mismatch");
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<float> y(a.size());
    const auto &av = a.data(), &bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    return Tensor::make(a.shape(), std::move(y), {a, b},
                        [](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{g, g};
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<float> y(a.size());
    const auto &av = a.data(), &bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    return Tensor::make(a.shape(), std::move(y), {a, b},
                        [](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{g, neg(g)};
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<float> y(a.size());
    const auto &av = a.data(), &bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    return Tensor::make(a.shape(), std::move(y), {a, b},
                        [](const Tensor& self, const Tensor& g) {
                            const Tensor& a = self.node()->parents[0];
                            const Tensor& b = self.node()->parents[1];
                            return std::vector<Tensor>{mul(g, b), mul(g, a)};
                        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    std::vector<float> y(a.size());
    const auto &av = a.data(), &bv = b.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
    return Tensor::make(a.shape(), std::move(y), {a, b},
                        [](const Tensor& self, const Tensor& g) {
                            const Tensor& a = self.node()->parents[0];
                            const Tensor& b = self.node()->parents[1];
                            Tensor da = div(g, b);
                            Tensor db = neg(mul(div(g, mul(b, b)), a));
                            return std::vector<Tensor>{da, db};
                        });
}

Tensor neg(const Tensor& a) { return scale(a, -1.f); }

Tensor scale(const Tensor& a, float s) {
    std::vector<float> y(a.size());
    const auto& av = a.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] * s;
    return Tensor::make(a.shape(), std::move(y), {a},
                        [s](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{scale(g, s)};
                        });
}

Tensor add_scalar(const Tensor& a, float s) {
    std::vector<float> y(a.size());
    const auto& av = a.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] + s;
    return Tensor::make(a.shape(), std::move(y), {a},
                        [](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{g};
                        });
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sqrt_t(const Tensor& a) {
    std::vector<float> y(a.size());
    const auto& av = a.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = std::sqrt(av[i]);
    return Tensor::make(a.shape(), std::move(y), {a},
                        [](const Tensor& self, const Tensor& g) {
                            // d sqrt(x) = g / (2 sqrt(x))
                            return std::vector<Tensor>{div(scale(g, 0.5f), self)};
                        });
}

// sign mask is treated as locally constant, as is standard for L1 losses
Tensor abs_t(const Tensor& a) {
    std::vector<float> y(a.size()), sgn(a.size());
    const auto& av = a.data();
    for (size_t i = 0; i < y.size(); ++i) {
        y[i] = std::fabs(av[i]);
        sgn[i] = av[i] > 0.f ? 1.f : (av[i] < 0.f ? -1.f : 0.f);
    }
    Tensor mask = Tensor::leaf(a.shape(), std::move(sgn));
    return Tensor::make(a.shape(), std::move(y), {a},
                        [mask](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{mul(g, mask)};
                        });
}

static Tensor masked_unit(const Tensor& a, float neg_slope) {
    std::vector<float> y(a.size()), m(a.size());
    const auto& av = a.data();
    for (size_t i = 0; i < y.size(); ++i) {
        const float k = av[i] > 0.f ? 1.f : neg_slope;
        m[i] = k;
        y[i] = av[i] * k;
    }
    Tensor mask = Tensor::leaf(a.shape(), std::move(m));
    return Tensor::make(a.shape(), std::move(y), {a},
                        [mask](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{mul(g, mask)};
                        });
}

Tensor relu(const Tensor& a) { return masked_unit(a, 0.f); }
Tensor leaky_relu(const Tensor& a, float slope) { return masked_unit(a, slope); }

Tensor tanh_t(const Tensor& a) {
    std::vector<float> y(a.size());
    const auto& av = a.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(av[i]);
    return Tensor::make(a.shape(), std::move(y), {a},
                        [](const Tensor& self, const Tensor& g) {
                            // 1 - y^2
                            Tensor one_minus = add_scalar(neg(square(self)), 1.f);
                            return std::vector<Tensor>{mul(g, one_minus)};
                        });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<float> y(a.size());
    const auto& av = a.data();
    for (size_t i = 0; i < y.size(); ++i) y[i] = 1.f / (1.f + std::exp(-av[i]));
    return Tensor::make(a.shape(), std::move(y), {a},
                        [](const Tensor& self, const Tensor& g) {
                            Tensor d = mul(self, add_scalar(neg(self), 1.f)); // y(1-y)
                            return std::vector<Tensor>{mul(g, d)};
                        });
}

// --- reductions / broadcasts ------------------------------------------------

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    Shape src = a.shape();
    return Tensor::make({1}, {float(acc)}, {a},
                        [src](const Tensor&, const Tensor& g) {
                            // scalar grad broadcast to the source shape
                            Tensor full = Tensor::make(
                                src, std::vector<float>(numel(src), g.data()[0]), {g},
                                [](const Tensor& self, const Tensor& gg) {
                                    return std::vector<Tensor>{sum(gg)};
                                });
                            return std::vector<Tensor>{full};
                        });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.f / float(a.size())); }

Tensor sum_per_sample(const Tensor& a) {
    check(!a.shape().empty(), "sum_per_sample: rank 0");
    const int n = a.shape()[0];
    const size_t per = a.size() / size_t(n);
    std::vector<float> y(size_t(n), 0.f);
    const auto& av = a.data();
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < per; ++j) acc += av[size_t(i) * per + j];
        y[size_t(i)] = float(acc);
    }
    Shape src = a.shape();
    return Tensor::make({n}, std::move(y), {a},
                        [src](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{broadcast_n(g, src)};
                        });
}

Tensor broadcast_n(const Tensor& a, const Shape& target) {
    check(a.shape().size() == 1 && target[0] == a.shape()[0], "broadcast_n: bad shapes");
    const int n = target[0];
    const size_t per = numel(target) / size_t(n);
    std::vector<float> y(numel(target));
    const auto& av = a.data();
    for (int i = 0; i < n; ++i)
        std::fill_n(y.begin() + size_t(i) * per, per, av[size_t(i)]);
    return Tensor::make(target, std::move(y), {a},
                        [](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{sum_per_sample(g)};
                        });
}

Tensor channel_sum(const Tensor& a) {
    check(a.shape().size() == 4 || a.shape().size() == 2, "channel_sum: need [N,C,..]");
    const int n = a.shape()[0], c = a.shape()[1];
    const size_t hw = a.size() / (size_t(n) * c);
    std::vector<float> y(size_t(c), 0.f);
    const auto& av = a.data();
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            const size_t base = (size_t(i) * c + ch) * hw;
            for (size_t j = 0; j < hw; ++j) acc += av[base + j];
            y[size_t(ch)] += float(acc);
        }
    Shape src = a.shape();
    return Tensor::make({c}, std::move(y), {a},
                        [src](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{broadcast_c(g, src)};
                        });
}

Tensor broadcast_c(const Tensor& a, const Shape& target) {
    check(a.shape().size() == 1 && target.size() >= 2 && target[1] == a.shape()[0],
          "broadcast_c: bad shapes");
    const int n = target[0], c = target[1];
    const size_t hw = numel(target) / (size_t(n) * c);
    std::vector<float> y(numel(target));
    const auto& av = a.data();
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            std::fill_n(y.begin() + (size_t(i) * c + ch) * hw, hw, av[size_t(ch)]);
    return Tensor::make(target, std::move(y), {a},
                        [](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{channel_sum(g)};
                        });
}

Tensor instance_sum(const Tensor& a) {
    check(a.shape().size() == 4, "instance_sum: need [N,C,H,W]");
    const int n = a.shape()[0], c = a.shape()[1];
    const size_t hw = a.size() / (size_t(n) * c);
    std::vector<float> y(size_t(n) * c);
    const auto& av = a.data();
    for (size_t k = 0; k < y.size(); ++k) {
        double acc = 0.0;
        for (size_t j = 0; j < hw; ++j) acc += av[k * hw + j];
        y[k] = float(acc);
    }
    Shape src = a.shape();
    return Tensor::make({n, c}, std::move(y), {a},
                        [src](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{broadcast_nc(g, src)};
                        });
}

Tensor broadcast_nc(const Tensor& a, const Shape& target) {
    check(a.shape().size() == 2 && target.size() == 4 && target[0] == a.shape()[0] &&
              target[1] == a.shape()[1],
          "broadcast_nc: bad shapes");
    const size_t nc = size_t(target[0]) * target[1];
    const size_t hw = numel(target) / nc;
    std::vector<float> y(numel(target));
    const auto& av = a.data();
    for (size_t k = 0; k < nc; ++k) std::fill_n(y.begin() + k * hw, hw, av[k]);
    return Tensor::make(target, std::move(y), {a},
                        [](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{instance_sum(g)};
                        });
}

// --- shape ops -------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    check(numel(shape) == a.size(), "reshape: numel mismatch");
    Shape src = a.shape();
    return Tensor::make(std::move(shape), a.data(), {a},
                        [src](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{reshape(g, src)};
                        });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 4 && b.shape().size() == 4, "concat: need [N,C,H,W]");
    check(a.shape()[0] == b.shape()[0] && a.shape()[2] == b.shape()[2] &&
              a.shape()[3] == b.shape()[3],
          "concat: shape mismatch");
    const int n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    const size_t hw = size_t(a.shape()[2]) * a.shape()[3];
    Shape out{n, ca + cb, a.shape()[2], a.shape()[3]};
    std::vector<float> y(numel(out));
    const auto &av = a.data(), &bv = b.data();
    for (int i = 0; i < n; ++i) {
        std::copy_n(av.begin() + size_t(i) * ca * hw, size_t(ca) * hw,
                    y.begin() + size_t(i) * (ca + cb) * hw);
        std::copy_n(bv.begin() + size_t(i) * cb * hw, size_t(cb) * hw,
                    y.begin() + size_t(i) * (ca + cb) * hw + size_t(ca) * hw);
    }
    return Tensor::make(out, std::move(y), {a, b},
                        [ca, cb](const Tensor& self, const Tensor& g) {
                            return std::vector<Tensor>{slice_channels(g, 0, ca),
                                                       slice_channels(g, ca, ca + cb)};
                        });
}

Tensor slice_channels(const Tensor& a, int from, int to) {
    check(a.shape().size() == 4 && from >= 0 && to <= a.shape()[1] && from < to,
          "slice_channels: bad range");
    const int n = a.shape()[0], c = a.shape()[1], cs = to - from;
    const size_t hw = size_t(a.shape()[2]) * a.shape()[3];
    Shape out{n, cs, a.shape()[2], a.shape()[3]};
    std::vector<float> y(numel(out));
    const auto& av = a.data();
    for (int i = 0; i < n; ++i)
        std::copy_n(av.begin() + (size_t(i) * c + from) * hw, size_t(cs) * hw,
                    y.begin() + size_t(i) * cs * hw);
    const int total_c = c;
    return Tensor::make(out, std::move(y), {a},
                        [from, to, total_c](const Tensor& self, const Tensor& g) {
                            // scatter back into a zero tensor of the source shape
                            const Shape& gs = g.shape();
                            Shape src{gs[0], total_c, gs[2], gs[3]};
                            Tensor zero_pre = from > 0
                                ? Tensor::zeros({gs[0], from, gs[2], gs[3]})
                                : Tensor();
                            Tensor zero_post = total_c - to > 0
                                ? Tensor::zeros({gs[0], total_c - to, gs[2], gs[3]})
                                : Tensor();
                            Tensor acc = g;
                            if (zero_pre.defined()) acc = concat_channels(zero_pre, acc);
                            if (zero_post.defined()) acc = concat_channels(acc, zero_post);
                            return std::vector<Tensor>{acc};
                        });
}

Tensor pixel_shuffle(const Tensor& a, int r) {
    check(a.shape().size() == 4 && a.shape()[1] % (r * r) == 0, "pixel_shuffle: bad shape");
    const int n = a.shape()[0], ci = a.shape()[1], h = a.shape()[2], w = a.shape()[3];
    const int co = ci / (r * r);
    Shape out{n, co, h * r, w * r};
    std::vector<float> y(numel(out));
    const auto& av = a.data();
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < co; ++c)
            for (int dr = 0; dr < r; ++dr)
                for (int dc = 0; dc < r; ++dc) {
                    const size_t in_base =
                        ((size_t(i) * ci + size_t(c) * r * r + size_t(dr) * r + dc) * h) * w;
                    for (int yy = 0; yy < h; ++yy)
                        for (int xx = 0; xx < w; ++xx)
                            y[((size_t(i) * co + c) * (h * r) + size_t(yy) * r + dr) * (w * r) +
                              size_t(xx) * r + dc] = av[in_base + size_t(yy) * w + xx];
                }
    return Tensor::make(out, std::move(y), {a},
                        [r](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{pixel_unshuffle(g, r)};
                        });
}

Tensor pixel_unshuffle(const Tensor& a, int r) {
    check(a.shape().size() == 4 && a.shape()[2] % r == 0 && a.shape()[3] % r == 0,
          "pixel_unshuffle: bad shape");
    const int n = a.shape()[0], ci = a.shape()[1], h = a.shape()[2] / r, w = a.shape()[3] / r;
    const int co = ci * r * r;
    Shape out{n, co, h, w};
    std::vector<float> y(numel(out));
    const auto& av = a.data();
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < ci; ++c)
            for (int dr = 0; dr < r; ++dr)
                for (int dc = 0; dc < r; ++dc) {
                    const size_t out_base =
                        ((size_t(i) * co + size_t(c) * r * r + size_t(dr) * r + dc) * h) * w;
                    for (int yy = 0; yy < h; ++yy)
                        for (int xx = 0; xx < w; ++xx)
                            y[out_base + size_t(yy) * w + xx] =
                                av[((size_t(i) * ci + c) * (h * r) + size_t(yy) * r + dr) *
                                       (w * r) +
                                   size_t(xx) * r + dc];
                }
    return Tensor::make(out, std::move(y), {a},
                        [r](const Tensor&, const Tensor& g) {
                            return std::vector<Tensor>{pixel_shuffle(g, r)};
                        });
}

// --- matmul family -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[0],
          "matmul: bad shapes");
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<float> y(size_t(m) * n);
    CMapRow A(a.data().data(), m, k), B(b.data().data(), k, n);
    MapRow Y(y.data(), m, n);
    Y.noalias() = A * B;
    return Tensor::make({m, n}, std::move(y), {a, b},
                        [](const Tensor& self, const Tensor& g) {
                            const Tensor& a = self.node()->parents[0];
                            const Tensor& b = self.node()->parents[1];
                            return std::vector<Tensor>{matmul_nt(g, b), matmul_tn(a, g)};
                        });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[0] == b.shape()[0],
          "matmul_tn: bad shapes");
    const int k = a.shape()[0], m = a.shape()[1], n = b.shape()[1];
    std::vector<float> y(size_t(m) * n);
    CMapRow A(a.data().data(), k, m), B(b.data().data(), k, n);
    MapRow Y(y.data(), m, n);
    Y.noalias() = A.transpose() * B;
    return Tensor::make({m, n}, std::move(y), {a, b},
                        [](const Tensor& self, const Tensor& g) {
                            const Tensor& a = self.node()->parents[0];
                            const Tensor& b = self.node()->parents[1];
                            return std::vector<Tensor>{matmul_nt(b, g), matmul(a, g)};
                        });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[1] == b.shape()[1],
          "matmul_nt: bad shapes");
    const int m = a.shape()[0], n = a.shape()[1], k = b.shape()[0];
    std::vector<float> y(size_t(m) * k);
    CMapRow A(a.data().data(), m, n), B(b.data().data(), k, n);
    MapRow Y(y.data(), m, k);
    Y.noalias() = A * B.transpose();
    return Tensor::make({m, k}, std::move(y), {a, b},
                        [](const Tensor& self, const Tensor& g) {
                            const Tensor& a = self.node()->parents[0];
                            const Tensor& b = self.node()->parents[1];
                            return std::vector<Tensor>{matmul(g, b), matmul_tn(g, a)};
                        });
}

// --- convolution family -------------------------------------------------------

namespace {

struct ConvGeom {
    int n, c, h, w, k, kh, kw, oh, ow, stride, pad;
};

ConvGeom conv_geom(const Shape& xs, const Shape& ws, int stride, int pad) {
    check(xs.size() == 4 && ws.size() == 4 && xs[1] == ws[1], "conv2d: bad shapes");
    ConvGeom g;
    g.n = xs[0]; g.c = xs[1]; g.h = xs[2]; g.w = xs[3];
    g.k = ws[0]; g.kh = ws[2]; g.kw = ws[3];
    g.stride = stride; g.pad = pad;
    g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
    g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
    check(g.oh > 0 && g.ow > 0, "conv2d: output would be empty");
    return g;
}

// col: [C*kh*kw, oh*ow] column-major not required; we use row-major throughout.
void im2col(const float* x, const ConvGeom& g, float* col) {
    const size_t ohow = size_t(g.oh) * g.ow;
    for (int c = 0; c < g.c; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                float* dst = col + ((size_t(c) * g.kh + ky) * g.kw + kx) * ohow;
                for (int oy = 0; oy < g.oh; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad;
                    for (int ox = 0; ox < g.ow; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad;
                        dst[size_t(oy) * g.ow + ox] =
                            (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                                ? x[(size_t(c) * g.h + iy) * g.w + ix]
                                : 0.f;
                    }
                }
            }
}

void col2im_add(const float* col, const ConvGeom& g, float* x) {
    const size_t ohow = size_t(g.oh) * g.ow;
    for (int c = 0; c < g.c; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                const float* src = col + ((size_t(c) * g.kh + ky) * g.kw + kx) * ohow;
                for (int oy = 0; oy < g.oh; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int ox = 0; ox < g.ow; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad;
                        if (ix < 0 || ix >= g.w) continue;
                        x[(size_t(c) * g.h + iy) * g.w + ix] += src[size_t(oy) * g.ow + ox];
                    }
                }
            }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    const ConvGeom g = conv_geom(x.shape(), w.shape(), stride, pad);
    const size_t ckk = size_t(g.c) * g.kh * g.kw, ohow = size_t(g.oh) * g.ow;
    std::vector<float> y(size_t(g.n) * g.k * ohow);
    std::vector<float> col(ckk * ohow);
    CMapRow W(w.data().data(), g.k, int(ckk));
    for (int i = 0; i < g.n; ++i) {
        im2col(x.data().data() + size_t(i) * g.c * g.h * g.w, g, col.data());
        CMapRow Col(col.data(), int(ckk), int(ohow));
        MapRow Y(y.data() + size_t(i) * g.k * ohow, g.k, int(ohow));
        Y.noalias() = W * Col;
    }
    const int in_h = g.h, in_w = g.w, kh = g.kh, kw = g.kw;
    return Tensor::make({g.n, g.k, g.oh, g.ow}, std::move(y), {x, w},
                        [stride, pad, in_h, in_w, kh, kw](const Tensor& self, const Tensor& gr) {
                            const Tensor& x = self.node()->parents[0];
                            const Tensor& w = self.node()->parents[1];
                            Tensor dx = conv2d_input_grad(gr, w, stride, pad, in_h, in_w);
                            Tensor dw = conv2d_weight_grad(x, gr, stride, pad, kh, kw);
                            return std::vector<Tensor>{dx, dw};
                        });
}

Tensor conv2d_input_grad(const Tensor& dy, const Tensor& w, int stride, int pad,
                         int in_h, int in_w) {
    const Shape& ds = dy.shape();
    const Shape& ws = w.shape();
    check(ds.size() == 4 && ws.size() == 4 && ds[1] == ws[0], "conv2d_input_grad: bad shapes");
    ConvGeom g;
    g.n = ds[0]; g.k = ds[1]; g.oh = ds[2]; g.ow = ds[3];
    g.c = ws[1]; g.kh = ws[2]; g.kw = ws[3];
    g.h = in_h; g.w = in_w; g.stride = stride; g.pad = pad;
    check((g.h + 2 * pad - g.kh) / stride + 1 == g.oh, "conv2d_input_grad: geometry mismatch");

    const size_t ckk = size_t(g.c) * g.kh * g.kw, ohow = size_t(g.oh) * g.ow;
    std::vector<float> dx(size_t(g.n) * g.c * g.h * g.w, 0.f);
    std::vector<float> col(ckk * ohow);
    CMapRow W(w.data().data(), g.k, int(ckk));
    for (int i = 0; i < g.n; ++i) {
        CMapRow Dy(dy.data().data() + size_t(i) * g.k * ohow, g.k, int(ohow));
        MapRow Col(col.data(), int(ckk), int(ohow));
        Col.noalias() = W.transpose() * Dy;
        col2im_add(col.data(), g, dx.data() + size_t(i) * g.c * g.h * g.w);
    }
    const int kh = g.kh, kw = g.kw;
    return Tensor::make({g.n, g.c, g.h, g.w}, std::move(dx), {dy, w},
                        [stride, pad, kh, kw](const Tensor& self, const Tensor& gr) {
                            const Tensor& dy = self.node()->parents[0];
                            const Tensor& w = self.node()->parents[1];
                            Tensor ddy = conv2d(gr, w, stride, pad);
                            Tensor dw = conv2d_weight_grad(gr, dy, stride, pad, kh, kw);
                            return std::vector<Tensor>{ddy, dw};
                        });
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& dy, int stride, int pad,
                          int kh, int kw) {
    const Shape& xs = x.shape();
    const Shape& ds = dy.shape();
    check(xs.size() == 4 && ds.size() == 4 && xs[0] == ds[0], "conv2d_weight_grad: bad shapes");
    ConvGeom g;
    g.n = xs[0]; g.c = xs[1]; g.h = xs[2]; g.w = xs[3];
    g.k = ds[1]; g.oh = ds[2]; g.ow = ds[3];
    g.kh = kh; g.kw = kw; g.stride = stride; g.pad = pad;
    check((g.h + 2 * pad - kh) / stride + 1 == g.oh, "conv2d_weight_grad: geometry mismatch");

    const size_t ckk = size_t(g.c) * kh * kw, ohow = size_t(g.oh) * g.ow;
    std::vector<float> dw(size_t(g.k) * ckk, 0.f);
    std::vector<float> col(ckk * ohow);
    MapRow Dw(dw.data(), g.k, int(ckk));
    for (int i = 0; i < g.n; ++i) {
        im2col(x.data().data() + size_t(i) * g.c * g.h * g.w, g, col.data());
        CMapRow Col(col.data(), int(ckk), int(ohow));
        CMapRow Dy(dy.data().data() + size_t(i) * g.k * ohow, g.k, int(ohow));
        Dw.noalias() += Dy * Col.transpose();
    }
    const int in_h = g.h, in_w = g.w;
    return Tensor::make({g.k, g.c, kh, kw}, std::move(dw), {x, dy},
                        [stride, pad, in_h, in_w](const Tensor& self, const Tensor& gr) {
                            const Tensor& x = self.node()->parents[0];
                            const Tensor& dy = self.node()->parents[1];
                            Tensor dx = conv2d_input_grad(dy, gr, stride, pad, in_h, in_w);
                            Tensor ddy = conv2d(x, gr, stride, pad);
                            return std::vector<Tensor>{dx, ddy};
                        });
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
    check(x.shape().size() >= 2 && b.shape().size() == 1 && x.shape()[1] == b.shape()[0],
          "bias_add: bad shapes");
    return add(x, broadcast_c(b, x.shape()));
}

} // namespace waswhistle::nn
