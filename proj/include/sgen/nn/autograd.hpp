#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sgen/image.hpp"
#include "sgen/nn/tensor.hpp"

namespace sgen::nn {

// Reverse-mode autodiff over tensors. Each op records its inputs and a
// closure that pushes the output gradient back into them.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;
};

// Graph recording is thread-local; NoGradGuard disables it for a scope.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

template <typename T>
class Var {
  public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    // For optimizers and weight loading; never used inside a recorded graph.
    Tensor<T>& mutable_value() { return node_->value; }
    const std::vector<int>& shape() const { return node_->value.shape(); }
    T item() const { return node_->value[0]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& mutable_grad();
    void zero_grad();

    // Seeds d(self)/d(self) = 1; self must hold a single element.
    void backward() const;

    const std::shared_ptr<Node<T>>& node() const { return node_; }
    static Var from_node(std::shared_ptr<Node<T>> n) {
        Var v;
        v.node_ = std::move(n);
        return v;
    }

  private:
    std::shared_ptr<Node<T>> node_;
};

enum class PadMode { zeros, reflect };

struct ConvGeometry {
    int channels = 0;
    int in_h = 0;
    int in_w = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 0;
    PadMode mode = PadMode::zeros;
    int out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
};

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> sum_squares(const Var<T>& a);
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T>
Var<T> tanh(const Var<T>& x);

// y[c] = x[c] * scale[c] + shift[c] with constant coefficients.
template <typename T>
Var<T> affine_channels(const Var<T>& x, const std::vector<T>& scale, const std::vector<T>& shift);
// Divides each pixel's feature vector by its L2 norm over channels.
template <typename T>
Var<T> channel_normalize(const Var<T>& x, T eps = T(1e-10));

// x: [C, H, W]; weight: [O, C, k, k]; bias: [O] or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding, PadMode mode);
// x: [C, H, W]; weight: [C, O, k, k]; output (H-1)*stride - 2*padding + k.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

// Per-channel normalization. In training mode the statistics come from x
// and the running estimates are updated in place.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps);

// Separable bicubic resampling (same kernel as imaging::resample, no clamp).
template <typename T>
Var<T> resize_bicubic(const Var<T>& x, Dims target);

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int kernel, int stride);

template <typename T>
Var<T> constant(Tensor<T> value) {
    return Var<T>(std::move(value), false);
}

}  // namespace sgen::nn
