#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sgen/image.hpp"

namespace sgen::nn {

std::string shape_str(const std::vector<int>& shape);

// Storage aligned to Eigen's widest packet so vectorized kernels split
// loops the same way on every run, keeping float sums reproducible.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

// Dense row-major tensor. Activations are CHW (batch of one); conv weights
// are [out, in, k, k].
template <typename T>
class Tensor {
  public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape, T fill = T(0)) : shape_(std::move(shape)) {
        data_.assign(count(shape_), fill);
    }
    Tensor(std::vector<int> shape, const std::vector<T>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (data_.size() != count(shape_)) {
            throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
        }
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& other) {
        if (other.shape_ != shape_) {
            throw std::invalid_argument("shape mismatch in +=: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
        }
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += other.data_[i];
        }
        return *this;
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) {
                throw std::invalid_argument("negative tensor dim in " + shape_str(shape));
            }
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

  private:
    std::vector<int> shape_;
    AlignedVector<T> data_;
};

// [3, H, W] tensor from an image, and back (clamped to [-1, 1]).
template <typename T>
Tensor<T> from_image(const Image& img);
template <typename T>
Image to_image(const Tensor<T>& t);

}  // namespace sgen::nn
