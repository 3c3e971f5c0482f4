#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sgen/image.hpp"
#include "sgen/rng.hpp"

namespace sgen::testing {

inline std::filesystem::path data_dir() {
    return SGEN_TEST_DATA;
}

inline std::filesystem::path smoke_image_path() {
    return data_dir() / "smoke.png";
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("sgen_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Image random_image(int h, int w, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(3) * h * w);
    for (auto& x : v) {
        x = static_cast<float>(rng.uniform(lo, hi));
    }
    return Image::from_planar(h, w, std::move(v));
}

// Sum of a few random low-frequency sinusoids, amplitude below 0.8.
inline Image smooth_random_image(int h, int w, std::uint64_t seed, double max_cycles = 2.0) {
    Rng rng(seed);
    Image img(h, w);
    for (int c = 0; c < 3; ++c) {
        double fx[3], fy[3], ph[3], amp[3];
        for (int k = 0; k < 3; ++k) {
            fx[k] = rng.uniform(0.0, max_cycles) / w;
            fy[k] = rng.uniform(0.0, max_cycles) / h;
            ph[k] = rng.uniform(0.0, 2.0 * M_PI);
            amp[k] = rng.uniform(0.05, 0.25);
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double v = 0.0;
                for (int k = 0; k < 3; ++k) {
                    v += amp[k] * std::sin(2.0 * M_PI * (fx[k] * x + fy[k] * y) + ph[k]);
                }
                img.set(c, y, x, static_cast<float>(v));
            }
        }
    }
    return img;
}

// Channel 0 encodes x, channel 1 encodes y, both linearly over [-1, 1];
// channel 2 is constant.
inline Image coordinate_image(int h, int w) {
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.set(0, y, x, static_cast<float>(2.0 * x / (w - 1) - 1.0));
            img.set(1, y, x, static_cast<float>(2.0 * y / (h - 1) - 1.0));
            img.set(2, y, x, 0.0f);
        }
    }
    return img;
}

inline double rel_error(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace sgen::testing
