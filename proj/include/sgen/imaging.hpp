#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "sgen/image.hpp"

namespace sgen::imaging {

// 8-bit RGB raster, values mapped linearly from [0,255] to [-1,1].
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

// Catmull-Rom (a = -0.5) cubic convolution kernel.
double cubic_kernel(double t);

// Row-stochastic 1-D resampling matrix (out_size x in_size). Sample
// coordinates are clamped at the borders. When shrinking, the kernel is
// stretched by the inverse scale so the result is antialiased.
Eigen::MatrixXd resample_matrix(int in_size, int out_size);

// Separable bicubic resampling; output clamped to [-1,1].
Image resample(const Image& img, int target_h, int target_w);
inline Image resample(const Image& img, Dims d) { return resample(img, d.height, d.width); }

struct PyramidSpec {
    double scale_factor = 0.75;
    int min_dim = 25;
    int max_dim = 250;
};

// Number of levels N+1 for an image whose shorter side is `min_side`.
int pyramid_level_count(int min_side, double scale_factor, int min_dim);

// Level dimensions, coarsest first. The effective ratio between levels is
// (min_dim / min_side)^(1/N) so the coarsest level lands on min_dim.
std::vector<Dims> pyramid_dims(Dims finest, const PyramidSpec& spec);

// Shrinks so the longer side is at most max_dim (no-op otherwise).
Image preshrink(const Image& img, int max_dim);

ImagePyramid build_pyramid(const Image& img, const PyramidSpec& spec);
ImagePyramid build_pyramid(const Image& img, double scale_factor, int min_dim, int max_dim);
// Levels resampled from `img` to exactly the given dims.
ImagePyramid build_pyramid_with_dims(const Image& img, const std::vector<Dims>& dims);

struct Palette {
    std::vector<Rgb> colors;
};

struct QuantizeOptions {
    std::uint64_t seed = 1234;
    int restarts = 10;
    int max_iterations = 100;
};

// k-means palette over RGB pixels (k-means++ seeding, best of `restarts`).
Palette fit_palette(const Image& img, int k, const QuantizeOptions& opts = {});
Image apply_palette(const Image& img, const Palette& palette);
// Sum over pixels of squared RGB distance to the assigned palette entry.
double quantization_error(const Image& img, const Palette& palette);
Image quantize_colors(const Image& img, int k, const QuantizeOptions& opts = {});
std::size_t count_distinct_colors(const Image& img);

struct CannyOptions {
    double sigma = 1.0;
    double low_threshold = 0.1;
    double high_threshold = 0.2;
};

// Binary edge map: +1 on edges, -1 elsewhere (replicated on all channels).
Image extract_edges(const Image& img, double low_thresh, double high_thresh, double sigma = 1.0);
inline Image extract_edges(const Image& img, const CannyOptions& o = {}) {
    return extract_edges(img, o.low_threshold, o.high_threshold, o.sigma);
}
// Pixels above `threshold` become +1, everything else -1.
Image binarize(const Image& img, float threshold = 0.0f);
bool is_binary(const Image& img);

// Horizontal concatenation; all inputs must share a height.
Image hconcat(const std::vector<Image>& images);

}  // namespace sgen::imaging
