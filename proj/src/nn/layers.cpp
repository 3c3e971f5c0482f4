#include "sgen/nn/layers.hpp"

#include <map>
#include <stdexcept>

namespace sgen::nn {

template <typename Src, typename Dst>
void copy_state(const StateRefs<Src>& src, StateRefs<Dst>& dst) {
    std::map<std::string, const Tensor<Src>*> lookup;
    for (const auto& [name, v] : src.params) {
        lookup[name] = &v->value();
    }
    for (const auto& [name, t] : src.buffers) {
        lookup[name] = t;
    }
    auto fetch = [&](const std::string& name, const std::vector<int>& shape) {
        auto it = lookup.find(name);
        if (it == lookup.end()) {
            throw std::invalid_argument("missing state entry '" + name + "'");
        }
        if (it->second->shape() != shape) {
            throw std::invalid_argument("state entry '" + name + "' has shape " + shape_str(it->second->shape()) +
                                        ", expected " + shape_str(shape));
        }
        return it->second->template cast<Dst>();
    };
    for (auto& [name, v] : dst.params) {
        v->mutable_value() = fetch(name, v->shape());
    }
    for (auto& [name, t] : dst.buffers) {
        *t = fetch(name, t->shape());
    }
}

template void copy_state<float, float>(const StateRefs<float>&, StateRefs<float>&);
template void copy_state<float, double>(const StateRefs<float>&, StateRefs<double>&);
template void copy_state<double, float>(const StateRefs<double>&, StateRefs<float>&);
template void copy_state<double, double>(const StateRefs<double>&, StateRefs<double>&);

template <typename T>
Tensor<T> gaussian_tensor(std::vector<int> shape, double mean, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) {
        v = static_cast<T>(mean + stddev * rng.normal());
    }
    return t;
}

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int padding_, PadMode mode_,
                  bool with_bias, Rng& rng)
    : stride(stride_), padding(padding_), mode(mode_) {
    weight = Var<T>(gaussian_tensor<T>({out_channels, in_channels, kernel, kernel}, 0.0, kInitStd, rng), true);
    if (with_bias) {
        bias = Var<T>(Tensor<T>({out_channels}), true);
    }
}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const {
    return conv2d(x, weight, bias, stride, padding, mode);
}

template <typename T>
void Conv2d<T>::collect(StateRefs<T>& refs, const std::string& prefix) {
    refs.params.emplace_back(prefix + "weight", &weight);
    if (bias.defined()) {
        refs.params.emplace_back(prefix + "bias", &bias);
    }
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride_, int padding_,
                                    bool with_bias, Rng& rng)
    : stride(stride_), padding(padding_) {
    weight = Var<T>(gaussian_tensor<T>({in_channels, out_channels, kernel, kernel}, 0.0, kInitStd, rng), true);
    if (with_bias) {
        bias = Var<T>(Tensor<T>({out_channels}), true);
    }
}

template <typename T>
Var<T> ConvTranspose2d<T>::forward(const Var<T>& x) const {
    return conv_transpose2d(x, weight, bias, stride, padding);
}

template <typename T>
void ConvTranspose2d<T>::collect(StateRefs<T>& refs, const std::string& prefix) {
    refs.params.emplace_back(prefix + "weight", &weight);
    if (bias.defined()) {
        refs.params.emplace_back(prefix + "bias", &bias);
    }
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, Rng& rng)
    : gamma(gaussian_tensor<T>({channels}, 1.0, kInitStd, rng), true),
      beta(Tensor<T>({channels}), true),
      running_mean({channels}, T(0)),
      running_var({channels}, T(1)) {}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x, Phase phase) {
    return batch_norm(x, gamma, beta, running_mean, running_var, phase == Phase::train, momentum, eps);
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x) const {
    Tensor<T> mean = running_mean;
    Tensor<T> var = running_var;
    return batch_norm(x, gamma, beta, mean, var, false, momentum, eps);
}

template <typename T>
void BatchNorm2d<T>::collect(StateRefs<T>& refs, const std::string& prefix) {
    refs.params.emplace_back(prefix + "weight", &gamma);
    refs.params.emplace_back(prefix + "bias", &beta);
    refs.buffers.emplace_back(prefix + "running_mean", &running_mean);
    refs.buffers.emplace_back(prefix + "running_var", &running_var);
}

template Tensor<float> gaussian_tensor<float>(std::vector<int>, double, double, Rng&);
template Tensor<double> gaussian_tensor<double>(std::vector<int>, double, double, Rng&);
template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;

}  // namespace sgen::nn
