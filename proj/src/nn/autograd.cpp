#include "sgen/nn/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include <Eigen/Dense>

#include "sgen/imaging.hpp"

namespace sgen::nn {

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Tensor<T>& grad_buffer(Node<T>& n) {
    if (n.grad.empty()) {
        n.grad = Tensor<T>(n.value.shape());
    }
    return n.grad;
}

template <typename T>
bool wants_grad(const Node<T>* n) {
    return n != nullptr && n->requires_grad;
}

template <typename T>
Node<T>* raw(const Var<T>& v) {
    return v.defined() ? v.node().get() : nullptr;
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs, std::function<void(Node<T>&)> fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    if (grad_enabled()) {
        bool any = false;
        for (const auto* in : inputs) {
            any = any || (in->defined() && in->requires_grad());
        }
        if (any) {
            n->requires_grad = true;
            for (const auto* in : inputs) {
                if (in->defined()) {
                    n->inputs.push_back(in->node());
                }
            }
            n->backward = std::move(fn);
        }
    }
    return Var<T>::from_node(std::move(n));
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
}

template <typename T>
void require_chw(const Var<T>& x, const char* op) {
    if (x.value().rank() != 3) {
        throw std::invalid_argument(std::string(op) + ": expected a [C, H, W] tensor, got " + shape_str(x.shape()));
    }
}

int source_index(int i, int n, PadMode mode) {
    if (i >= 0 && i < n) {
        return i;
    }
    if (mode == PadMode::zeros) {
        return -1;
    }
    if (n == 1) {
        return 0;
    }
    while (i < 0 || i >= n) {
        if (i < 0) {
            i = -i;
        }
        if (i >= n) {
            i = 2 * (n - 1) - i;
        }
    }
    return i;
}

struct IndexMaps {
    std::vector<int> rows;  // kernel * out_h
    std::vector<int> cols;  // kernel * out_w
};

IndexMaps index_maps(const ConvGeometry& g) {
    IndexMaps m;
    const int oh = g.out_h();
    const int ow = g.out_w();
    m.rows.resize(static_cast<std::size_t>(g.kernel) * oh);
    m.cols.resize(static_cast<std::size_t>(g.kernel) * ow);
    for (int k = 0; k < g.kernel; ++k) {
        for (int o = 0; o < oh; ++o) {
            m.rows[static_cast<std::size_t>(k) * oh + o] = source_index(o * g.stride - g.padding + k, g.in_h, g.mode);
        }
        for (int o = 0; o < ow; ++o) {
            m.cols[static_cast<std::size_t>(k) * ow + o] = source_index(o * g.stride - g.padding + k, g.in_w, g.mode);
        }
    }
    return m;
}

template <typename T>
void im2col(const T* img, const ConvGeometry& g, const IndexMaps& maps, T* cols) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    const std::size_t plane = static_cast<std::size_t>(g.in_h) * g.in_w;
    const std::size_t patch = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < g.channels; ++c) {
        const T* src = img + c * plane;
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                T* dst = cols + ((static_cast<std::size_t>(c) * g.kernel + ki) * g.kernel + kj) * patch;
                const int* xm = maps.cols.data() + static_cast<std::size_t>(kj) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = maps.rows[static_cast<std::size_t>(ki) * oh + oy];
                    T* d = dst + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0) {
                        std::fill(d, d + ow, T(0));
                        continue;
                    }
                    const T* s = src + static_cast<std::size_t>(iy) * g.in_w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = xm[ox];
                        d[ox] = ix < 0 ? T(0) : s[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, const IndexMaps& maps, T* img) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    const std::size_t plane = static_cast<std::size_t>(g.in_h) * g.in_w;
    const std::size_t patch = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < g.channels; ++c) {
        T* dst = img + c * plane;
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                const T* src = cols + ((static_cast<std::size_t>(c) * g.kernel + ki) * g.kernel + kj) * patch;
                const int* xm = maps.cols.data() + static_cast<std::size_t>(kj) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = maps.rows[static_cast<std::size_t>(ki) * oh + oy];
                    if (iy < 0) {
                        continue;
                    }
                    const T* s = src + static_cast<std::size_t>(oy) * ow;
                    T* d = dst + static_cast<std::size_t>(iy) * g.in_w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = xm[ox];
                        if (ix >= 0) {
                            d[ix] += s[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>& Var<T>::mutable_grad() {
    return grad_buffer(*node_);
}

template <typename T>
void Var<T>::zero_grad() {
    if (node_) {
        node_->grad = Tensor<T>();
    }
}

template <typename T>
void Var<T>::backward() const {
    if (!node_ || node_->value.numel() != 1) {
        throw std::logic_error("backward() needs a single-element output");
    }
    if (!node_->requires_grad) {
        return;
    }
    // Post-order DFS gives a topological order with inputs before outputs.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            Node<T>* child = n->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    grad_buffer(*node_)[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>& n = **it;
        if (n.backward && !n.grad.empty()) {
            n.backward(n);
        }
    }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out = a.value();
    out += b.value();
    Node<T>* na = raw(a);
    Node<T>* nb = raw(b);
    return make_result<T>(std::move(out), {&a, &b}, [na, nb](Node<T>& self) {
        if (wants_grad(na)) {
            grad_buffer(*na) += self.grad;
        }
        if (wants_grad(nb)) {
            grad_buffer(*nb) += self.grad;
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] -= b.value()[i];
    }
    Node<T>* na = raw(a);
    Node<T>* nb = raw(b);
    return make_result<T>(std::move(out), {&a, &b}, [na, nb](Node<T>& self) {
        if (wants_grad(na)) {
            grad_buffer(*na) += self.grad;
        }
        if (wants_grad(nb)) {
            auto& g = grad_buffer(*nb);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                g[i] -= self.grad[i];
            }
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.values()) {
        v *= s;
    }
    Node<T>* na = raw(a);
    return make_result<T>(std::move(out), {&a}, [na, s](Node<T>& self) {
        auto& g = grad_buffer(*na);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            g[i] += s * self.grad[i];
        }
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T total = 0;
    for (T v : a.value().values()) {
        total += v;
    }
    Node<T>* na = raw(a);
    return make_result<T>(Tensor<T>({1}, total), {&a}, [na](Node<T>& self) {
        auto& g = grad_buffer(*na);
        for (auto& v : g.values()) {
            v += self.grad[0];
        }
    });
}

template <typename T>
Var<T> sum_squares(const Var<T>& a) {
    T total = 0;
    for (T v : a.value().values()) {
        total += v * v;
    }
    Node<T>* na = raw(a);
    return make_result<T>(Tensor<T>({1}, total), {&a}, [na](Node<T>& self) {
        auto& g = grad_buffer(*na);
        const T s = T(2) * self.grad[0];
        for (std::size_t i = 0; i < g.numel(); ++i) {
            g[i] += s * na->value[i];
        }
    });
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a, b, "mean_abs_diff");
    const std::size_t n = a.value().numel();
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total += std::abs(a.value()[i] - b.value()[i]);
    }
    Node<T>* na = raw(a);
    Node<T>* nb = raw(b);
    return make_result<T>(Tensor<T>({1}, total / static_cast<T>(n)), {&a, &b}, [na, nb, n](Node<T>& self) {
        const T s = self.grad[0] / static_cast<T>(n);
        for (Node<T>* target : {na, nb}) {
            if (!wants_grad(target)) {
                continue;
            }
            const T sign_flip = target == na ? T(1) : T(-1);
            auto& g = grad_buffer(*target);
            for (std::size_t i = 0; i < n; ++i) {
                const T d = na->value[i] - nb->value[i];
                const T sgn = d > 0 ? T(1) : (d < 0 ? T(-1) : T(0));
                g[i] += sign_flip * sgn * s;
            }
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    return leaky_relu(x, T(0));
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) {
        v = v > 0 ? v : v * slope;
    }
    Node<T>* nx = raw(x);
    return make_result<T>(std::move(out), {&x}, [nx, slope](Node<T>& self) {
        auto& g = grad_buffer(*nx);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            g[i] += nx->value[i] > 0 ? self.grad[i] : slope * self.grad[i];
        }
    });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.values()) {
        v = std::tanh(v);
    }
    Node<T>* nx = raw(x);
    return make_result<T>(std::move(out), {&x}, [nx](Node<T>& self) {
        auto& g = grad_buffer(*nx);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const T y = self.value[i];
            g[i] += (T(1) - y * y) * self.grad[i];
        }
    });
}

template <typename T>
Var<T> affine_channels(const Var<T>& x, const std::vector<T>& scale_c, const std::vector<T>& shift_c) {
    require_chw(x, "affine_channels");
    const int c = x.value().dim(0);
    if (static_cast<int>(scale_c.size()) != c || static_cast<int>(shift_c.size()) != c) {
        throw std::invalid_argument("affine_channels: coefficient count does not match channels");
    }
    const std::size_t plane = x.value().numel() / static_cast<std::size_t>(c);
    Tensor<T> out = x.value();
    for (int ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
            auto& v = out[ch * plane + i];
            v = v * scale_c[ch] + shift_c[ch];
        }
    }
    Node<T>* nx = raw(x);
    return make_result<T>(std::move(out), {&x}, [nx, scale_c, plane](Node<T>& self) {
        auto& g = grad_buffer(*nx);
        for (std::size_t ch = 0; ch < scale_c.size(); ++ch) {
            for (std::size_t i = 0; i < plane; ++i) {
                g[ch * plane + i] += scale_c[ch] * self.grad[ch * plane + i];
            }
        }
    });
}

template <typename T>
Var<T> channel_normalize(const Var<T>& x, T eps) {
    require_chw(x, "channel_normalize");
    const int c = x.value().dim(0);
    const std::size_t plane = x.value().numel() / static_cast<std::size_t>(c);
    std::vector<T> norms(plane, T(0));
    for (int ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
            const T v = x.value()[ch * plane + i];
            norms[i] += v * v;
        }
    }
    for (auto& n : norms) {
        n = std::sqrt(n) + eps;
    }
    Tensor<T> out = x.value();
    for (int ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
            out[ch * plane + i] /= norms[i];
        }
    }
    Node<T>* nx = raw(x);
    return make_result<T>(std::move(out), {&x}, [nx, norms = std::move(norms), c, plane](Node<T>& self) {
        auto& g = grad_buffer(*nx);
        // d/dx (x / (|x| + eps)) applied to the upstream gradient.
        for (std::size_t i = 0; i < plane; ++i) {
            const T r = norms[i];
            T dot = 0;
            T raw_norm = 0;
            for (int ch = 0; ch < c; ++ch) {
                const T xv = nx->value[ch * plane + i];
                dot += self.grad[ch * plane + i] * xv;
                raw_norm += xv * xv;
            }
            raw_norm = std::sqrt(raw_norm);
            const T coeff = raw_norm > 0 ? dot / (r * r * raw_norm) : T(0);
            for (int ch = 0; ch < c; ++ch) {
                const T xv = nx->value[ch * plane + i];
                g[ch * plane + i] += self.grad[ch * plane + i] / r - coeff * xv;
            }
        }
    });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding, PadMode mode) {
    require_chw(x, "conv2d");
    const auto& w = weight.value();
    if (w.rank() != 4 || w.dim(1) != x.value().dim(0) || w.dim(2) != w.dim(3)) {
        throw std::invalid_argument("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                                    shape_str(x.shape()));
    }
    ConvGeometry g{x.value().dim(0), x.value().dim(1), x.value().dim(2), w.dim(2), stride, padding, mode};
    if (mode == PadMode::reflect && (padding >= g.in_h || padding >= g.in_w)) {
        throw std::invalid_argument("conv2d: reflection padding needs input larger than the padding");
    }
    const int oh = g.out_h();
    const int ow = g.out_w();
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("conv2d: input " + shape_str(x.shape()) + " too small for kernel");
    }
    const int out_c = w.dim(0);
    const Eigen::Index k = static_cast<Eigen::Index>(g.channels) * g.kernel * g.kernel;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    const IndexMaps maps = index_maps(g);

    AlignedVector<T> cols(static_cast<std::size_t>(k * p));
    im2col(x.value().data(), g, maps, cols.data());
    Tensor<T> out({out_c, oh, ow});
    MatMap<T> out_m(out.data(), out_c, p);
    out_m.noalias() = ConstMatMap<T>(w.data(), out_c, k) * ConstMatMap<T>(cols.data(), k, p);
    if (bias.defined()) {
        for (int o = 0; o < out_c; ++o) {
            out_m.row(o).array() += bias.value()[o];
        }
    }

    Node<T>* nx = raw(x);
    Node<T>* nw = raw(weight);
    Node<T>* nb = raw(bias);
    return make_result<T>(std::move(out), {&x, &weight, &bias}, [nx, nw, nb, g, maps, k, p, out_c](Node<T>& self) {
        ConstMatMap<T> grad_out(self.grad.data(), out_c, p);
        AlignedVector<T> cols_buf(static_cast<std::size_t>(k * p));
        if (wants_grad(nw)) {
            im2col(nx->value.data(), g, maps, cols_buf.data());
            MatMap<T>(grad_buffer(*nw).data(), out_c, k).noalias() +=
                grad_out * ConstMatMap<T>(cols_buf.data(), k, p).transpose();
        }
        if (wants_grad(nb)) {
            auto& gb = grad_buffer(*nb);
            for (int o = 0; o < out_c; ++o) {
                gb[o] += grad_out.row(o).sum();
            }
        }
        if (wants_grad(nx)) {
            MatMap<T> dcols(cols_buf.data(), k, p);
            dcols.noalias() = ConstMatMap<T>(nw->value.data(), out_c, k).transpose() * grad_out;
            col2im_add(cols_buf.data(), g, maps, grad_buffer(*nx).data());
        }
    });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
    require_chw(x, "conv_transpose2d");
    const auto& w = weight.value();
    const int in_c = x.value().dim(0);
    if (w.rank() != 4 || w.dim(0) != in_c || w.dim(2) != w.dim(3)) {
        throw std::invalid_argument("conv_transpose2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                                    shape_str(x.shape()));
    }
    const int h = x.value().dim(1);
    const int wd = x.value().dim(2);
    const int out_c = w.dim(1);
    const int kernel = w.dim(2);
    const int oh = (h - 1) * stride - 2 * padding + kernel;
    const int ow = (wd - 1) * stride - 2 * padding + kernel;
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("conv_transpose2d: empty output");
    }
    // The adjoint of a zero-padded conv from the output grid onto the input grid.
    ConvGeometry g{out_c, oh, ow, kernel, stride, padding, PadMode::zeros};
    if (g.out_h() != h || g.out_w() != wd) {
        throw std::logic_error("conv_transpose2d: inconsistent geometry");
    }
    const IndexMaps maps = index_maps(g);
    const Eigen::Index k = static_cast<Eigen::Index>(out_c) * kernel * kernel;
    const Eigen::Index p = static_cast<Eigen::Index>(h) * wd;

    AlignedVector<T> cols(static_cast<std::size_t>(k * p));
    MatMap<T>(cols.data(), k, p).noalias() =
        ConstMatMap<T>(w.data(), in_c, k).transpose() * ConstMatMap<T>(x.value().data(), in_c, p);
    Tensor<T> out({out_c, oh, ow});
    col2im_add(cols.data(), g, maps, out.data());
    if (bias.defined()) {
        const std::size_t plane = static_cast<std::size_t>(oh) * ow;
        for (int o = 0; o < out_c; ++o) {
            for (std::size_t i = 0; i < plane; ++i) {
                out[o * plane + i] += bias.value()[o];
            }
        }
    }

    Node<T>* nx = raw(x);
    Node<T>* nw = raw(weight);
    Node<T>* nb = raw(bias);
    return make_result<T>(std::move(out), {&x, &weight, &bias}, [nx, nw, nb, g, maps, k, p, in_c, out_c](Node<T>& self) {
        AlignedVector<T> dcols(static_cast<std::size_t>(k * p));
        im2col(self.grad.data(), g, maps, dcols.data());
        ConstMatMap<T> dcols_m(dcols.data(), k, p);
        if (wants_grad(nx)) {
            MatMap<T>(grad_buffer(*nx).data(), in_c, p).noalias() += ConstMatMap<T>(nw->value.data(), in_c, k) * dcols_m;
        }
        if (wants_grad(nw)) {
            MatMap<T>(grad_buffer(*nw).data(), in_c, k).noalias() +=
                ConstMatMap<T>(nx->value.data(), in_c, p) * dcols_m.transpose();
        }
        if (wants_grad(nb)) {
            auto& gb = grad_buffer(*nb);
            const std::size_t plane = self.grad.numel() / static_cast<std::size_t>(out_c);
            for (int o = 0; o < out_c; ++o) {
                T s = 0;
                for (std::size_t i = 0; i < plane; ++i) {
                    s += self.grad[o * plane + i];
                }
                gb[o] += s;
            }
        }
    });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps) {
    require_chw(x, "batch_norm");
    const int c = x.value().dim(0);
    const std::size_t plane = x.value().numel() / static_cast<std::size_t>(c);
    std::vector<T> mean(c);
    std::vector<T> inv_std(c);
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x.value().data() + ch * plane;
        if (training) {
            double m = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                m += src[i];
            }
            m /= static_cast<double>(plane);
            double v = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                v += (src[i] - m) * (src[i] - m);
            }
            const double biased = v / static_cast<double>(plane);
            const double unbiased = plane > 1 ? v / static_cast<double>(plane - 1) : biased;
            mean[ch] = static_cast<T>(m);
            inv_std[ch] = static_cast<T>(1.0 / std::sqrt(biased + static_cast<double>(eps)));
            running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * static_cast<T>(m);
            running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * static_cast<T>(unbiased);
        } else {
            mean[ch] = running_mean[ch];
            inv_std[ch] = T(1) / std::sqrt(running_var[ch] + eps);
        }
    }
    Tensor<T> xhat(x.value().shape());
    Tensor<T> out(x.value().shape());
    for (int ch = 0; ch < c; ++ch) {
        const T gm = gamma.value()[ch];
        const T bt = beta.value()[ch];
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = ch * plane + i;
            xhat[idx] = (x.value()[idx] - mean[ch]) * inv_std[ch];
            out[idx] = gm * xhat[idx] + bt;
        }
    }
    Node<T>* nx = raw(x);
    Node<T>* ng = raw(gamma);
    Node<T>* nb = raw(beta);
    return make_result<T>(std::move(out), {&x, &gamma, &beta},
                          [nx, ng, nb, xhat = std::move(xhat), inv_std, c, plane, training](Node<T>& self) {
                              for (int ch = 0; ch < c; ++ch) {
                                  const T* go = self.grad.data() + ch * plane;
                                  const T* xh = xhat.data() + ch * plane;
                                  T sum_g = 0;
                                  T sum_gx = 0;
                                  for (std::size_t i = 0; i < plane; ++i) {
                                      sum_g += go[i];
                                      sum_gx += go[i] * xh[i];
                                  }
                                  if (wants_grad(ng)) {
                                      grad_buffer(*ng)[ch] += sum_gx;
                                  }
                                  if (wants_grad(nb)) {
                                      grad_buffer(*nb)[ch] += sum_g;
                                  }
                                  if (wants_grad(nx)) {
                                      const T gm = ng->value[ch];
                                      T* gx = grad_buffer(*nx).data() + ch * plane;
                                      if (training) {
                                          const T n = static_cast<T>(plane);
                                          const T k = gm * inv_std[ch] / n;
                                          for (std::size_t i = 0; i < plane; ++i) {
                                              gx[i] += k * (n * go[i] - sum_g - xh[i] * sum_gx);
                                          }
                                      } else {
                                          for (std::size_t i = 0; i < plane; ++i) {
                                              gx[i] += gm * inv_std[ch] * go[i];
                                          }
                                      }
                                  }
                              }
                          });
}

template <typename T>
Var<T> resize_bicubic(const Var<T>& x, Dims target) {
    require_chw(x, "resize_bicubic");
    const int c = x.value().dim(0);
    const int h = x.value().dim(1);
    const int w = x.value().dim(2);
    if (target.height == h && target.width == w) {
        return x;
    }
    const RowMat<T> rh = imaging::resample_matrix(h, target.height).cast<T>();
    const RowMat<T> rw = imaging::resample_matrix(w, target.width).cast<T>();
    Tensor<T> out({c, target.height, target.width});
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const std::size_t out_plane = static_cast<std::size_t>(target.height) * target.width;
    for (int ch = 0; ch < c; ++ch) {
        MatMap<T>(out.data() + ch * out_plane, target.height, target.width).noalias() =
            rh * ConstMatMap<T>(x.value().data() + ch * in_plane, h, w) * rw.transpose();
    }
    Node<T>* nx = raw(x);
    return make_result<T>(std::move(out), {&x}, [nx, rh, rw, c, h, w, target, in_plane, out_plane](Node<T>& self) {
        auto& g = grad_buffer(*nx);
        for (int ch = 0; ch < c; ++ch) {
            MatMap<T>(g.data() + ch * in_plane, h, w).noalias() +=
                rh.transpose() * ConstMatMap<T>(self.grad.data() + ch * out_plane, target.height, target.width) * rw;
        }
    });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int kernel, int stride) {
    require_chw(x, "max_pool2d");
    const int c = x.value().dim(0);
    const int h = x.value().dim(1);
    const int w = x.value().dim(2);
    const int oh = (h - kernel) / stride + 1;
    const int ow = (w - kernel) / stride + 1;
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("max_pool2d: input " + shape_str(x.shape()) + " smaller than the window");
    }
    Tensor<T> out({c, oh, ow});
    std::vector<std::size_t> arg(out.numel());
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_i = 0;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const std::size_t idx =
                            (static_cast<std::size_t>(ch) * h + oy * stride + ky) * w + ox * stride + kx;
                        if (x.value()[idx] > best) {
                            best = x.value()[idx];
                            best_i = idx;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(ch) * oh + oy) * ow + ox;
                out[o] = best;
                arg[o] = best_i;
            }
        }
    }
    Node<T>* nx = raw(x);
    return make_result<T>(std::move(out), {&x}, [nx, arg = std::move(arg)](Node<T>& self) {
        auto& g = grad_buffer(*nx);
        for (std::size_t o = 0; o < arg.size(); ++o) {
            g[arg[o]] += self.grad[o];
        }
    });
}

#define SGEN_INSTANTIATE_AUTOGRAD(T)                                                                              \
    template class Var<T>;                                                                                        \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                         \
    template Var<T> scale<T>(const Var<T>&, T);                                                                   \
    template Var<T> sum<T>(const Var<T>&);                                                                        \
    template Var<T> sum_squares<T>(const Var<T>&);                                                                \
    template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                                               \
    template Var<T> relu<T>(const Var<T>&);                                                                       \
    template Var<T> leaky_relu<T>(const Var<T>&, T);                                                              \
    template Var<T> tanh<T>(const Var<T>&);                                                                       \
    template Var<T> affine_channels<T>(const Var<T>&, const std::vector<T>&, const std::vector<T>&);              \
    template Var<T> channel_normalize<T>(const Var<T>&, T);                                                       \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int, PadMode);                    \
    template Var<T> conv_transpose2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                   \
    template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, T, T); \
    template Var<T> resize_bicubic<T>(const Var<T>&, Dims);                                                       \
    template Var<T> max_pool2d<T>(const Var<T>&, int, int);

SGEN_INSTANTIATE_AUTOGRAD(float)
SGEN_INSTANTIATE_AUTOGRAD(double)

}  // namespace sgen::nn
