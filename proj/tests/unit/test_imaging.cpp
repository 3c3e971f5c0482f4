#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "sgen/imaging.hpp"

using namespace sgen;
using namespace sgen::imaging;
namespace fs = std::filesystem;

namespace {

// Binary PPM written by hand so decoding is checked against bytes we chose.
fs::path write_ppm(const fs::path& path, int h, int w, unsigned char value) {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n" << w << " " << h << "\n255\n";
    for (int i = 0; i < h * w * 3; ++i) {
        out.put(static_cast<char>(value));
    }
    return path;
}

// Keys cubic with a = -0.5, written in expanded polynomial form.
double keys(double t) {
    t = std::fabs(t);
    if (t < 1.0) {
        return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    }
    if (t < 2.0) {
        return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    }
    return 0.0;
}

// Direct 2-D evaluation of bicubic upsampling with clamped taps.
double bicubic_oracle(const Image& img, int c, int oy, int ox, int out_h, int out_w) {
    const double sy = (oy + 0.5) * img.height() / out_h - 0.5;
    const double sx = (ox + 0.5) * img.width() / out_w - 0.5;
    double acc = 0.0;
    for (int j = static_cast<int>(std::floor(sy)) - 1; j <= static_cast<int>(std::floor(sy)) + 2; ++j) {
        for (int i = static_cast<int>(std::floor(sx)) - 1; i <= static_cast<int>(std::floor(sx)) + 2; ++i) {
            const int yy = std::clamp(j, 0, img.height() - 1);
            const int xx = std::clamp(i, 0, img.width() - 1);
            acc += keys(sy - j) * keys(sx - i) * img.at(c, yy, xx);
        }
    }
    return std::clamp(acc, -1.0, 1.0);
}

bool in_range(const Image& img) {
    for (float v : img.values()) {
        if (!(v >= -1.0f && v <= 1.0f)) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_SUITE("imaging") {
    TEST_CASE("load maps 8-bit values linearly onto [-1, 1]") {
        const auto dir = testing::scratch_dir("load");
        const Image black = load_image(write_ppm(dir / "black.ppm", 4, 5, 0));
        const Image white = load_image(write_ppm(dir / "white.ppm", 4, 5, 255));
        const Image gray = load_image(write_ppm(dir / "gray.ppm", 4, 5, 128));
        CHECK(black.height() == 4);
        CHECK(black.width() == 5);
        for (float v : black.values()) {
            CHECK(v == -1.0f);
        }
        for (float v : white.values()) {
            CHECK(v == 1.0f);
        }
        for (float v : gray.values()) {
            CHECK(v == doctest::Approx(2.0 * 128.0 / 255.0 - 1.0).epsilon(1e-6));
        }
    }

    TEST_CASE("load reports missing and undecodable files") {
        const auto dir = testing::scratch_dir("load_err");
        CHECK_THROWS_WITH_AS(load_image(dir / "nope.png"), doctest::Contains("nope.png"), std::runtime_error);
        std::ofstream(dir / "junk.png") << "definitely not a png";
        CHECK_THROWS_AS(load_image(dir / "junk.png"), std::runtime_error);
    }

    TEST_CASE("save then load round-trips within one quantization step") {
        const auto dir = testing::scratch_dir("roundtrip");
        const Image zeros(6, 7, 0.0f);
        save_image(zeros, dir / "zeros.png");
        CHECK(max_abs_diff(load_image(dir / "zeros.png"), zeros) <= 1.0f / 255.0f + 1e-6f);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Image r = testing::random_image(9, 11, seed);
            save_image(r, dir / "r.png");
            CHECK(max_abs_diff(load_image(dir / "r.png"), r) <= 1.0f / 255.0f + 1e-6f);
        }
    }

    TEST_CASE("save to an unwritable location fails") {
        const auto dir = testing::scratch_dir("save_err");
        std::ofstream(dir / "file") << "x";
        CHECK_THROWS_AS(save_image(Image(2, 2), dir / "file" / "out.png"), std::runtime_error);
    }

    TEST_CASE("resample identity and constants") {
        const Image r = testing::random_image(8, 10, 3);
        CHECK(resample(r, 8, 10) == r);
        const Image k(5, 7, 0.37f);
        for (auto [h, w] : {std::pair{3, 4}, {11, 13}, {5, 20}, {1, 1}}) {
            const Image out = resample(k, h, w);
            REQUIRE(out.height() == h);
            REQUIRE(out.width() == w);
            for (float v : out.values()) {
                CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
            }
        }
    }

    TEST_CASE("resample of a 4x4 ramp to 8x8 matches direct kernel evaluation") {
        Image ramp(4, 4);
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                ramp.set(0, y, x, -0.9f + 0.15f * x + 0.3f * y);
                ramp.set(1, y, x, 0.8f - 0.5f * x);
                ramp.set(2, y, x, 0.1f * (x - y));
            }
        }
        const Image up = resample(ramp, 8, 8);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < 8; ++y) {
                for (int x = 0; x < 8; ++x) {
                    CHECK(up.at(c, y, x) == doctest::Approx(bicubic_oracle(ramp, c, y, x, 8, 8)).epsilon(1e-6));
                }
            }
        }
    }

    TEST_CASE("resample is idempotent at fixed dims and stays in range") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Image r = testing::random_image(9 + static_cast<int>(seed), 12, seed);
            const Image once = resample(r, 17, 7);
            CHECK(resample(once, 17, 7) == once);
            CHECK(in_range(once));
            CHECK(in_range(resample(r, 30, 40)));
        }
    }

    TEST_CASE("resample rejects non-positive dims") {
        CHECK_THROWS_AS(resample(Image(3, 3), 0, 3), std::invalid_argument);
        CHECK_THROWS_AS(resample(Image(3, 3), 3, -1), std::invalid_argument);
    }

    TEST_CASE("pyramid level counts") {
        CHECK(pyramid_level_count(188, 0.75, 25) == 9);
        CHECK(build_pyramid(Image(188, 250), 0.75, 25, 250).num_levels() == 9);

        const Image small = testing::random_image(25, 31, 1);
        const ImagePyramid one = build_pyramid(small, 0.6, 25, 250);
        REQUIRE(one.num_levels() == 1);
        CHECK(one.levels[0] == small);

        const ImagePyramid three = build_pyramid(testing::random_image(100, 120, 2), 0.5, 25, 250);
        REQUIRE(three.num_levels() == 3);
        CHECK(three.levels[0].dims().min_side() == 25);
        CHECK(three.levels[1].dims().min_side() == 50);
        CHECK(three.levels[2].dims().min_side() == 100);
    }

    TEST_CASE("pyramid argument errors") {
        const Image img(40, 40);
        CHECK_THROWS_AS(build_pyramid(img, 1.0, 25, 250), std::invalid_argument);
        CHECK_THROWS_AS(build_pyramid(img, 0.0, 25, 250), std::invalid_argument);
        CHECK_THROWS_AS(build_pyramid(img, 0.75, 41, 250), std::invalid_argument);
    }

    TEST_CASE("pyramid structure over random specs") {
        Rng rng(42);
        for (int trial = 0; trial < 40; ++trial) {
            const int h = 20 + static_cast<int>(rng.uniform() * 120);
            const int w = 20 + static_cast<int>(rng.uniform() * 120);
            const double r = rng.uniform(0.5, 0.9);
            const int min_dim = 8 + static_cast<int>(rng.uniform() * (std::min(h, w) - 8));
            const int max_dim = 60 + static_cast<int>(rng.uniform() * 100);
            const Image img = testing::random_image(h, w, static_cast<std::uint64_t>(trial));
            if (min_dim > preshrink(img, max_dim).dims().min_side()) {
                continue;
            }
            const ImagePyramid p = build_pyramid(img, r, min_dim, max_dim);
            const Image base = preshrink(img, max_dim);
            const double n_expected =
                std::ceil(std::log(static_cast<double>(min_dim) / base.dims().min_side()) / std::log(r) - 1e-9) + 1;
            CHECK(p.num_levels() == static_cast<int>(n_expected));
            CHECK(p.finest() == base);
            CHECK(std::abs(p.coarsest().dims().min_side() - min_dim) <= 1);
            for (int n = 0; n + 1 < p.num_levels(); ++n) {
                CHECK(p.levels[n].height() < p.levels[n + 1].height());
                CHECK(p.levels[n].width() < p.levels[n + 1].width());
                CHECK(p.levels[n] == resample(base, p.levels[n].dims()));
            }
        }
    }

    TEST_CASE("upsampling a pyramid level lands near the next level") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Image img = testing::smooth_random_image(48, 64, seed);
            const ImagePyramid p = build_pyramid(img, 0.75, 25, 250);
            for (int n = 0; n + 1 < p.num_levels(); ++n) {
                const Image up = resample(p.levels[n], p.levels[n + 1].dims());
                CHECK(max_abs_diff(up, p.levels[n + 1]) <= 0.02f);
            }
        }
    }

    TEST_CASE("quantize keeps minimal palettes") {
        Image two(6, 6, -0.5f);
        for (int y = 0; y < 6; ++y) {
            for (int x = 3; x < 6; ++x) {
                two.set_pixel(y, x, {0.25f, 0.75f, -1.0f});
            }
        }
        CHECK(quantize_colors(two, 2) == two);
        const Image k(5, 4, 0.1f);
        CHECK(quantize_colors(k, 2) == k);
        CHECK(quantize_colors(k, 7) == k);
        CHECK_THROWS_AS(quantize_colors(k, 1), std::invalid_argument);
    }

    TEST_CASE("k-means palette beats random palettes") {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const Image img = testing::random_image(16, 16, 100 + seed);
            const Palette pal = fit_palette(img, 6);
            const Image q = apply_palette(img, pal);
            CHECK(count_distinct_colors(q) <= 6);
            const double err = quantization_error(img, pal);
            Rng rng(seed);
            for (int trial = 0; trial < 30; ++trial) {
                Palette random;
                for (int k = 0; k < 6; ++k) {
                    if (trial % 2 == 0) {
                        random.colors.push_back({static_cast<float>(rng.uniform(-1, 1)),
                                                 static_cast<float>(rng.uniform(-1, 1)),
                                                 static_cast<float>(rng.uniform(-1, 1))});
                    } else {
                        const int y = static_cast<int>(rng.uniform() * 16);
                        const int x = static_cast<int>(rng.uniform() * 16);
                        random.colors.push_back(img.pixel(y, x));
                    }
                }
                CHECK(err <= quantization_error(img, random));
            }
        }
    }

    TEST_CASE("quantized palette size never exceeds K") {
        for (int k = 2; k <= 9; ++k) {
            const Image img = testing::random_image(12, 10, static_cast<std::uint64_t>(k));
            CHECK(count_distinct_colors(quantize_colors(img, k)) <= static_cast<std::size_t>(k));
        }
    }

    TEST_CASE("canny on a constant image has no edges") {
        const Image e = extract_edges(Image(10, 12, 0.3f), 0.1, 0.2);
        for (float v : e.values()) {
            CHECK(v == -1.0f);
        }
    }

    TEST_CASE("canny marks a one-pixel vertical line at an 8x8 step") {
        Image step(8, 8, -1.0f);
        for (int y = 0; y < 8; ++y) {
            for (int x = 4; x < 8; ++x) {
                step.set_pixel(y, x, {1.0f, 1.0f, 1.0f});
            }
        }
        const Image e = extract_edges(step, 0.1, 0.2);
        CHECK(is_binary(e));
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                CHECK(e.at(0, y, x) == (x == 4 ? 1.0f : -1.0f));
            }
        }
    }

    TEST_CASE("canny output is binary and thresholds must be ordered") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            CHECK(is_binary(extract_edges(testing::random_image(20, 24, seed), 0.1, 0.2)));
        }
        CHECK_THROWS_AS(extract_edges(Image(4, 4), 0.3, 0.2), std::invalid_argument);
        CHECK_THROWS_AS(extract_edges(Image(4, 4), -0.1, 0.2), std::invalid_argument);
    }

    TEST_CASE("hconcat places images side by side") {
        const Image a = testing::random_image(5, 3, 1);
        const Image b = testing::random_image(5, 4, 2);
        const Image c = hconcat({a, b});
        REQUIRE(c.width() == 7);
        CHECK(c.at(1, 2, 1) == a.at(1, 2, 1));
        CHECK(c.at(2, 4, 5) == b.at(2, 4, 2));
        CHECK_THROWS_AS(hconcat({a, Image(4, 3)}), std::invalid_argument);
    }
}
