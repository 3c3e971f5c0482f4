#include "sgen/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sgen {

namespace {

float clamp_unit(float v) {
    if (std::isnan(v)) {
        return 0.0f;
    }
    return std::clamp(v, -1.0f, 1.0f);
}

void check_same_dims(const Image& a, const Image& b) {
    if (a.dims() != b.dims()) {
        throw std::invalid_argument("image dims differ: " + std::to_string(a.height()) + "x" +
                                    std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                                    "x" + std::to_string(b.width()));
    }
}

}  // namespace

Image::Image(int height, int width, float fill) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
        throw std::invalid_argument("image dims must be positive, got " + std::to_string(height) + "x" +
                                    std::to_string(width));
    }
    data_.assign(static_cast<std::size_t>(kChannels) * plane_size(), clamp_unit(fill));
}

Image Image::from_planar(int height, int width, std::vector<float> values) {
    Image img(height, width);
    if (values.size() != img.data_.size()) {
        throw std::invalid_argument("planar buffer size " + std::to_string(values.size()) +
                                    " does not match " + std::to_string(img.data_.size()));
    }
    for (auto& v : values) {
        v = clamp_unit(v);
    }
    img.data_ = std::move(values);
    return img;
}

void Image::set(int c, int y, int x, float v) {
    data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x] = clamp_unit(v);
}

void Image::set_pixel(int y, int x, const Rgb& rgb) {
    for (int c = 0; c < kChannels; ++c) {
        set(c, y, x, rgb[c]);
    }
}

Image Image::flipped_horizontally() const {
    Image out = *this;
    for (int c = 0; c < kChannels; ++c) {
        for (int y = 0; y < height_; ++y) {
            for (int x = 0; x < width_; ++x) {
                out.data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x] = at(c, y, width_ - 1 - x);
            }
        }
    }
    return out;
}

float max_abs_diff(const Image& a, const Image& b) {
    check_same_dims(a, b);
    float m = 0.0f;
    auto va = a.values();
    auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        m = std::max(m, std::abs(va[i] - vb[i]));
    }
    return m;
}

double mean_abs_diff(const Image& a, const Image& b) {
    check_same_dims(a, b);
    double s = 0.0;
    auto va = a.values();
    auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        s += std::abs(static_cast<double>(va[i]) - vb[i]);
    }
    return s / static_cast<double>(va.size());
}

std::vector<Dims> ImagePyramid::dims() const {
    std::vector<Dims> out;
    out.reserve(levels.size());
    for (const auto& l : levels) {
        out.push_back(l.dims());
    }
    return out;
}

}  // namespace sgen
