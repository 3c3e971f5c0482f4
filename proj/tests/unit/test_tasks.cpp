#include <doctest.h>

#include <cmath>

#include "bundles.hpp"
#include "helpers.hpp"
#include "sgen/imaging.hpp"
#include "sgen/tasks.hpp"

using namespace sgen;
using namespace sgen::model;
namespace fs = std::filesystem;

namespace {

const GeneratorConfig kSmallGen{8, 3, 3};

bool identical(const Image& a, const Image& b) {
    return a.dims() == b.dims() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

ModelBundle unconditional_bundle(const Image& img, std::uint64_t seed = 1) {
    return testing::bundle_for(img, Mode::unconditional, testing::small_spec(18), kSmallGen, seed);
}

ModelBundle conditional_bundle(const Image& img, ConditionSource source, std::uint64_t seed = 1) {
    ModelBundle b = testing::bundle_for(img, Mode::conditional, testing::small_spec(18), kSmallGen, seed);
    b.condition_source = source;
    if (source == ConditionSource::paint_quantized) {
        b.palette = imaging::fit_palette(img, 5);
    }
    return b;
}

Image coarse(const ModelBundle& b, std::uint64_t seed) {
    return testing::smooth_random_image(b.coarsest_dims().height, b.coarsest_dims().width, seed);
}

}  // namespace

TEST_SUITE("tasks") {
    TEST_CASE("blend endpoints and errors") {
        const Image img = testing::smooth_random_image(36, 48, 1);
        const ModelBundle b = unconditional_bundle(img);
        const auto z1 = encode(*b.encoder, coarse(b, 2));
        const auto z2 = encode(*b.encoder, coarse(b, 3));
        CHECK(tasks::blend(z1, z2, 1.0).values == z1.values);
        CHECK(tasks::blend(z1, z2, 0.0).values == z2.values);
        const auto mid = tasks::blend(z1, z2, 0.25);
        for (std::size_t i = 0; i < mid.values.numel(); ++i) {
            CHECK(mid.values[i] == doctest::Approx(0.25f * z1.values[i] + 0.75f * z2.values[i]));
        }
        CHECK_THROWS_AS(tasks::blend(z1, z2, 1.5), std::invalid_argument);
        CHECK_THROWS_AS(tasks::blend(z1, LatentCode{nn::Tensor<float>({1, 2, 2})}, 0.5), std::invalid_argument);
    }

    TEST_CASE("interpolation endpoints reproduce single-image generation") {
        const Image img = testing::smooth_random_image(36, 48, 4);
        const ModelBundle b = unconditional_bundle(img, 2);
        const Image x1 = coarse(b, 5);
        const Image x2 = coarse(b, 6);
        CHECK(identical(tasks::interpolate(b, x1, x2, 1.0), tasks::generate(b, x1)));
        CHECK(identical(tasks::interpolate(b, x1, x2, 0.0), tasks::generate(b, x2)));
        CHECK(tasks::interpolate(b, x1, x2, 0.5).dims() == b.finest_dims());
        CHECK_THROWS_AS(tasks::interpolate(b, img, x2, 0.5), std::invalid_argument);
    }

    TEST_CASE("animation frame counts and endpoints") {
        const Image img = testing::smooth_random_image(36, 48, 7);
        const ModelBundle b = unconditional_bundle(img, 3);
        tasks::AnimationSpec spec;
        spec.frame_count = 2;
        const auto once = tasks::animate(b, img, spec);
        REQUIRE(once.size() == 3);
        const auto [xa, xb] = tasks::animation_endpoints(b, img, spec);
        CHECK(identical(once.front(), tasks::generate(b, xa)));
        CHECK(identical(once.back(), tasks::generate(b, xb)));
        CHECK(identical(once[1], tasks::interpolate(b, xa, xb, 0.5)));

        spec.loop = tasks::LoopMode::ping_pong;
        const auto pp = tasks::animate(b, img, spec);
        REQUIRE(pp.size() == 4);
        for (std::size_t i = 0; i < pp.size(); ++i) {
            CHECK(identical(pp[i], pp[(pp.size() - i) % pp.size()]));
        }
        spec.frame_count = 5;
        CHECK(tasks::animate(b, img, spec).size() == 10);
        spec.frame_count = 1;
        CHECK_THROWS_AS(tasks::animate(b, img, spec), std::invalid_argument);
    }

    TEST_CASE("frames are written in order") {
        const auto dir = testing::scratch_dir("frames");
        std::vector<Image> frames{Image(4, 5, -0.5f), Image(4, 5, 0.5f), Image(4, 5, 1.0f)};
        const auto paths = tasks::write_frames(frames, dir / "out");
        REQUIRE(paths.size() == 3);
        CHECK(paths[2].filename() == "frame_0002.png");
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(max_abs_diff(imaging::load_image(paths[i]), frames[i]) <= 1.0f / 255.0f + 1e-6f);
        }
    }

    TEST_CASE("novel synthesis widens the canvas") {
        const Image img = testing::smooth_random_image(36, 48, 8);
        const ModelBundle b = unconditional_bundle(img, 4);
        for (int count : {1, 2, 3}) {
            tasks::NovelSpec spec;
            spec.count = count;
            const Image out = tasks::synthesize_novel(b, img, spec);
            CHECK(out.height() == b.finest_dims().height);
            CHECK(std::fabs(out.width() - count * b.finest_dims().width) <= 0.02 * count * b.finest_dims().width);
        }
        const auto dims = tasks::widened_dims({{3, 4}, {6, 9}}, 3);
        CHECK(dims[1] == Dims{6, 27});
        tasks::NovelSpec bad;
        bad.count = 0;
        CHECK_THROWS_AS(tasks::synthesize_novel(b, img, bad), std::invalid_argument);
    }

    TEST_CASE("feather weights follow the distance ramp") {
        Image mask(15, 15, -1.0f);
        mask.set(1, 7, 7, 1.0f);
        const auto w = tasks::feather_weights(mask);
        for (int y = 0; y < 15; ++y) {
            for (int x = 0; x < 15; ++x) {
                const double d = std::hypot(x - 7.0, y - 7.0);
                const double want = d >= tasks::kFeatherRadius ? 0.0 : 1.0 - d / tasks::kFeatherRadius;
                CHECK(w[static_cast<std::size_t>(y) * 15 + x] == doctest::Approx(want).epsilon(1e-6));
            }
        }
    }

    TEST_CASE("harmonization leaves far pixels untouched") {
        const Image img = testing::smooth_random_image(36, 48, 9);
        const ModelBundle b = unconditional_bundle(img, 5);
        Image composite = img;
        Image mask(img.height(), img.width(), -1.0f);
        for (int y = 10; y < 20; ++y) {
            for (int x = 15; x < 30; ++x) {
                mask.set(0, y, x, 1.0f);
                for (int c = 0; c < 3; ++c) {
                    composite.set(c, y, x, 0.6f);
                }
            }
        }
        const Image out = tasks::harmonize(b, tasks::HarmonizationJob{composite, mask, std::nullopt});
        const auto w = tasks::feather_weights(mask);
        const int level = tasks::default_injection_level(b);
        const Dims d = b.pyramid().level_dims[static_cast<std::size_t>(level)];
        const Image generated = inject_at_scale(b.generator, imaging::resample(composite, d), level).back();
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                const float wt = w[static_cast<std::size_t>(y) * img.width() + x];
                for (int c = 0; c < 3; ++c) {
                    if (wt == 0.0f) {
                        CHECK(out.at(c, y, x) == composite.at(c, y, x));
                    } else if (wt == 1.0f) {
                        CHECK(out.at(c, y, x) == generated.at(c, y, x));
                    }
                }
            }
        }
        CHECK_THROWS_AS(tasks::harmonize(b, tasks::HarmonizationJob{composite, Image(10, 10), std::nullopt}),
                        std::invalid_argument);
        CHECK_THROWS_AS(tasks::harmonize(b, tasks::HarmonizationJob{composite, mask, b.generator.num_blocks()}),
                        std::out_of_range);
        CHECK_THROWS_AS(tasks::harmonize(b, tasks::HarmonizationJob{composite, mask, -1}), std::out_of_range);
    }

    TEST_CASE("super resolution dims and the zero-residual chain") {
        const Image img = testing::smooth_random_image(36, 48, 10);
        ModelBundle b = unconditional_bundle(img, 6);
        const double r = b.pyramid().scale_factor;
        const Dims d2 = tasks::super_resolve_dims(img.dims(), r, 2);
        CHECK(d2.height == static_cast<int>(std::ceil(36.0 / (r * r) - 1e-9)));
        CHECK(d2.width == static_cast<int>(std::ceil(48.0 / (r * r) - 1e-9)));
        CHECK(b.generator.num_blocks() >= 1);
        testing::zero_residuals(b.generator);
        const Image out = tasks::super_resolve(b, img, 2);
        REQUIRE(out.dims() == d2);
        Image chain = img;
        for (int k = 1; k <= 2; ++k) {
            chain = imaging::resample(chain, tasks::super_resolve_dims(img.dims(), r, k));
        }
        CHECK(max_abs_diff(out, chain) <= 1e-5f);
        CHECK_THROWS_AS(tasks::super_resolve(b, img, 0), std::invalid_argument);
        CHECK_THROWS_AS(tasks::super_resolve(b, img, 2, 100), std::invalid_argument);
        CHECK_THROWS_AS(tasks::super_resolve_dims(img.dims(), 1.0, 1), std::invalid_argument);
    }

    TEST_CASE("conditional tasks accept their own maps") {
        const Image img = testing::smooth_random_image(36, 48, 11);
        const ModelBundle edges = conditional_bundle(img, ConditionSource::edge_map);
        const Image blank(img.height(), img.width(), -1.0f);
        const Image out = tasks::edges2image(edges, blank);
        CHECK(out.dims() == edges.finest_dims());
        CHECK(std::all_of(out.values().begin(), out.values().end(), [](float v) { return std::isfinite(v); }));
        // A grey map is binarized at 0 before use.
        const Image grey = imaging::extract_edges(img);
        Image soft = grey;
        for (int y = 0; y < soft.height(); ++y) {
            for (int x = 0; x < soft.width(); ++x) {
                for (int c = 0; c < 3; ++c) {
                    soft.set(c, y, x, 0.5f * grey.at(c, y, x) + 0.1f);
                }
            }
        }
        CHECK(identical(tasks::edges2image(edges, soft), tasks::edges2image(edges, imaging::binarize(soft, 0.0f))));

        const ModelBundle paint = conditional_bundle(img, ConditionSource::paint_quantized);
        CHECK(tasks::paint2image(paint, imaging::apply_palette(img, *paint.palette)).dims() == paint.finest_dims());
    }

    TEST_CASE("tasks reject bundles of the wrong mode") {
        const Image img = testing::smooth_random_image(36, 48, 12);
        const ModelBundle u = unconditional_bundle(img);
        const ModelBundle e = conditional_bundle(img, ConditionSource::edge_map);
        const ModelBundle p = conditional_bundle(img, ConditionSource::paint_quantized);
        CHECK_THROWS_AS(tasks::generate(e, coarse(e, 1)), ModeError);
        CHECK_THROWS_AS(tasks::animate(p, img, {}), ModeError);
        CHECK_THROWS_AS(tasks::synthesize_novel(e, img, {}), ModeError);
        CHECK_THROWS_AS(tasks::edges2image(u, img), ModeError);
        CHECK_THROWS_AS(tasks::edges2image(p, img), ModeError);
        CHECK_THROWS_WITH_AS(tasks::paint2image(e, img), doctest::Contains("paint-quantized"), ModeError);
    }

    TEST_CASE("training image is reloaded from the recorded path") {
        const auto dir = testing::scratch_dir("tasks_training_image");
        const Image img = testing::smooth_random_image(36, 48, 13);
        imaging::save_image(img, dir / "t.png");
        ModelBundle b = unconditional_bundle(img);
        CHECK_THROWS_AS(tasks::training_image(b), std::runtime_error);
        b.train_config = {{"image_path", (dir / "t.png").string()}};
        const Image back = tasks::training_image(b);
        CHECK(max_abs_diff(back, img) <= 1.0f / 255.0f + 1e-6f);
    }
}
