#pragma once
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace waswhistle::nn {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Tensor;
using Shape = std::vector<int>;

size_t numel(const Shape& s);

// Tape node. Gradients are produced by `backward` as ordinary graph tensors,
// so differentiating through a gradient (the WGAN-gp penalty) works the same
// way as differentiating through any forward computation.
struct Node {
    Shape shape;
    std::shared_ptr<std::vector<float>> data;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<std::vector<Tensor>(const Tensor& self, const Tensor& grad)> backward;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor leaf(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value);

    bool defined() const { return bool(n_); }
    const Shape& shape() const { return n_->shape; }
    size_t size() const { return n_->data->size(); }
    std::vector<float>& data() { return *n_->data; }
    const std::vector<float>& data() const { return *n_->data; }
    bool requires_grad() const { return n_->requires_grad; }
    float item() const;

    // leaf sharing the same storage, cut off from the tape
    Tensor detach() const;

    Node* node() const { return n_.get(); }

    // internal: construct an op result
    static Tensor make(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                       std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> backward);

private:
    std::shared_ptr<Node> n_;
};

// Reverse-mode gradients of a scalar `output` with respect to `inputs`.
// With create_graph the returned tensors stay on the tape and can be
// differentiated again; otherwise they are detached leaves.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph = false);

// --- elementwise ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor square(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float slope = 0.2f);
Tensor tanh_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// --- reductions and broadcasts --------------------------------------------

Tensor sum(const Tensor& a);                    // -> [1]
Tensor mean(const Tensor& a);                   // -> [1]
Tensor sum_per_sample(const Tensor& a);         // [N,...] -> [N]
Tensor broadcast_n(const Tensor& a, const Shape& target);   // [N] -> [N,...]
Tensor channel_sum(const Tensor& a);            // [N,C,H,W] -> [C]
Tensor broadcast_c(const Tensor& a, const Shape& target);   // [C] -> [N,C,H,W]
Tensor instance_sum(const Tensor& a);           // [N,C,H,W] -> [N,C]
Tensor broadcast_nc(const Tensor& a, const Shape& target);  // [N,C] -> [N,C,H,W]

// --- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& a, int from, int to); // [from, to)
Tensor pixel_shuffle(const Tensor& a, int r);
Tensor pixel_unshuffle(const Tensor& a, int r);

// --- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [M,K]x[K,N]
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // aT b: [K,M]x[K,N] -> [M,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a bT: [M,N]x[K,N] -> [M,K]

// --- convolution family ------------------------------------------------------
// x: [N,C,H,W], w: [K,C,kh,kw]. The three ops are mutually adjoint and closed
// under differentiation, which is what makes the gradient penalty possible.

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor conv2d_input_grad(const Tensor& dy, const Tensor& w, int stride, int pad,
                         int in_h, int in_w);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& dy, int stride, int pad,
                          int kh, int kw);

// bias broadcast over [N,C] or [N,C,H,W]
Tensor bias_add(const Tensor& x, const Tensor& b);

} // namespace waswhistle::nn
