#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace sgen {

struct Dims {
    int height = 0;
    int width = 0;

    int min_side() const { return height < width ? height : width; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

using Rgb = std::array<float, 3>;

// Three-channel raster stored channel-planar (CHW). Pixel values live in
// [-1, 1]; every operation that produces an Image clamps into that range.
class Image {
  public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int height, int width, float fill = 0.0f);

    // Takes planar CHW values, clamping into [-1, 1].
    static Image from_planar(int height, int width, std::vector<float> values);

    int height() const { return height_; }
    int width() const { return width_; }
    Dims dims() const { return {height_, width_}; }
    bool empty() const { return data_.empty(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

    float at(int c, int y, int x) const { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
    void set(int c, int y, int x, float v);

    Rgb pixel(int y, int x) const { return {at(0, y, x), at(1, y, x), at(2, y, x)}; }
    void set_pixel(int y, int x, const Rgb& rgb);

    std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const float> values() const { return data_; }

    Image flipped_horizontally() const;

    friend bool operator==(const Image&, const Image&) = default;

  private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

float max_abs_diff(const Image& a, const Image& b);
double mean_abs_diff(const Image& a, const Image& b);

// Levels ordered coarsest (index 0) to finest (index N).
struct ImagePyramid {
    std::vector<Image> levels;
    double scale_factor = 0.75;

    int num_levels() const { return static_cast<int>(levels.size()); }
    const Image& coarsest() const { return levels.front(); }
    const Image& finest() const { return levels.back(); }
    std::vector<Dims> dims() const;
};

}  // namespace sgen
