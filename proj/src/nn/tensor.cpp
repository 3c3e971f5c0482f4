#include "sgen/nn/tensor.hpp"

namespace sgen::nn {

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += (i ? ", " : "") + std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename T>
Tensor<T> from_image(const Image& img) {
    auto v = img.values();
    return Tensor<T>({Image::kChannels, img.height(), img.width()}, std::vector<T>(v.begin(), v.end()));
}

template <typename T>
Image to_image(const Tensor<T>& t) {
    if (t.rank() != 3 || t.dim(0) != Image::kChannels) {
        throw std::invalid_argument("expected a [3, H, W] tensor, got " + shape_str(t.shape()));
    }
    auto v = t.values();
    return Image::from_planar(t.dim(1), t.dim(2), std::vector<float>(v.begin(), v.end()));
}

template Tensor<float> from_image<float>(const Image&);
template Tensor<double> from_image<double>(const Image&);
template Image to_image<float>(const Tensor<float>&);
template Image to_image<double>(const Tensor<double>&);

}  // namespace sgen::nn
