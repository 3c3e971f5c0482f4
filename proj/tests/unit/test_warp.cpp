#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sgen/warp.hpp"

using namespace sgen;
using namespace sgen::warp;

namespace {

double max_coeff_gap(const TpsWarp& w, const std::vector<std::vector<double>>& ref) {
    const std::size_t n = w.source_grid.size();
    double gap = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 2; ++c) {
            gap = std::max(gap, std::fabs(w.radial_weights(static_cast<Eigen::Index>(i), c) - ref[i][c]));
        }
    }
    for (int k = 0; k < 3; ++k) {
        for (int c = 0; c < 2; ++c) {
            gap = std::max(gap, std::fabs(w.affine(k, c) - ref[n + k][c]));
        }
    }
    return gap;
}

double residual(const TpsWarp& w) {
    double r = 0.0;
    for (std::size_t i = 0; i < w.source_grid.size(); ++i) {
        const Point2 f = evaluate_warp(w, w.source_grid[i]);
        r += std::hypot(f.x - w.targets[i].x, f.y - w.targets[i].y);
    }
    return r;
}

}  // namespace

TEST_SUITE("warp") {
    TEST_CASE("kernel convention") {
        CHECK(tps_kernel(0.0) == 0.0);
        CHECK(tps_kernel(1.0) == doctest::Approx(0.0));
        CHECK(tps_kernel(0.25) == doctest::Approx(0.25 * std::log(0.25)));
        CHECK(tps_kernel(4.0) == doctest::Approx(4.0 * std::log(4.0)));
    }

    TEST_CASE("identity targets give the identity map") {
        const auto grid = regular_grid(4);
        for (double lambda : {0.0, 0.1, 5.0}) {
            const TpsWarp w = fit_tps(grid, grid, lambda);
            CHECK(w.radial_weights.cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(std::fabs(w.affine(1, 0) - 1.0) <= 1e-10);
            CHECK(std::fabs(w.affine(2, 1) - 1.0) <= 1e-10);
            CHECK(std::fabs(w.affine(0, 0)) + std::fabs(w.affine(0, 1)) <= 1e-10);
            CHECK(bending_energy(w) <= 1e-12);
        }
    }

    TEST_CASE("affine targets have no radial part") {
        Rng rng(5);
        const auto grid = regular_grid(4);
        for (int trial = 0; trial < 10; ++trial) {
            const double a[6] = {rng.uniform(-0.2, 0.2), rng.uniform(0.5, 1.5), rng.uniform(-0.3, 0.3),
                                 rng.uniform(-0.2, 0.2), rng.uniform(-0.3, 0.3), rng.uniform(0.5, 1.5)};
            std::vector<Point2> t;
            for (const auto& g : grid) {
                t.push_back({a[0] + a[1] * g.x + a[2] * g.y, a[3] + a[4] * g.x + a[5] * g.y});
            }
            const TpsWarp w = fit_tps(grid, t, rng.uniform(0.0, 1.0));
            CHECK(w.radial_weights.cwiseAbs().maxCoeff() <= 1e-9);
            CHECK(bending_energy(w) <= 1e-8);
            CHECK(w.affine(0, 0) == doctest::Approx(a[0]).epsilon(1e-9));
            CHECK(w.affine(1, 0) == doctest::Approx(a[1]).epsilon(1e-9));
            CHECK(w.affine(2, 1) == doctest::Approx(a[5]).epsilon(1e-9));
        }
    }

    TEST_CASE("coefficients match a dense elimination solve") {
        Rng rng(11);
        for (int trial = 0; trial < 20; ++trial) {
            const auto prob = oracle::random_tps_problem(rng);
            for (double lambda : {0.0, 0.01, 0.1, 1.0}) {
                const TpsWarp w = fit_tps(prob.grid, prob.targets, lambda);
                CHECK(max_coeff_gap(w, oracle::tps_dense(prob.grid, prob.targets, lambda)) <= 1e-8);
            }
            CHECK(residual(fit_tps(prob.grid, prob.targets, 0.0)) <= 1e-8);
        }
    }

    TEST_CASE("solution is linear in the targets") {
        Rng rng(12);
        for (int trial = 0; trial < 10; ++trial) {
            const auto p1 = oracle::random_tps_problem(rng, 4, 0.0);
            const auto p2 = oracle::random_tps_problem(rng, 4, 0.0);
            const auto& grid = p1.grid;
            std::vector<Point2> sum;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                sum.push_back({p1.targets[i].x + p2.targets[i].x - grid[i].x,
                               p1.targets[i].y + p2.targets[i].y - grid[i].y});
            }
            for (double lambda : {0.0, 0.01, 0.5}) {
                const TpsWarp f1 = fit_tps(grid, p1.targets, lambda);
                const TpsWarp f2 = fit_tps(grid, p2.targets, lambda);
                const TpsWarp fs = fit_tps(grid, sum, lambda);
                for (int k = 0; k < 25; ++k) {
                    const Point2 q{rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2)};
                    const Point2 a = evaluate_warp(f1, q);
                    const Point2 b = evaluate_warp(f2, q);
                    const Point2 s = evaluate_warp(fs, q);
                    CHECK(std::fabs(s.x - (a.x + b.x - q.x)) <= 1e-8);
                    CHECK(std::fabs(s.y - (a.y + b.y - q.y)) <= 1e-8);
                }
            }
        }
    }

    TEST_CASE("smoothing trades bending energy for control-point residual") {
        Rng rng(13);
        const std::vector<double> lambdas{0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 10.0};
        for (int trial = 0; trial < 20; ++trial) {
            const auto prob = oracle::random_tps_problem(rng);
            double prev_e = INFINITY;
            double prev_r = -1.0;
            for (double lambda : lambdas) {
                const TpsWarp w = fit_tps(prob.grid, prob.targets, lambda);
                const double e = bending_energy(w);
                const double r = residual(w);
                CHECK(e >= 0.0);
                CHECK(e <= prev_e * (1.0 + 1e-12) + 1e-15);
                CHECK(r >= prev_r - 1e-12);
                prev_e = e;
                prev_r = r;
            }
        }
    }

    TEST_CASE("bending energy matches plane quadrature of squared second derivatives") {
        Rng rng(14);
        for (int trial = 0; trial < 3; ++trial) {
            const auto prob = oracle::random_tps_problem(rng);
            const TpsWarp w = fit_tps(prob.grid, prob.targets, 0.01);
            const double quad = oracle::plane_bending_integral(w);
            CHECK(testing::rel_error(16.0 * M_PI * bending_energy(w), quad) <= 0.02);
        }
    }

    TEST_CASE("degenerate and invalid inputs") {
        const std::vector<Point2> line{{0, 0}, {0.5, 0.5}, {1, 1}, {0.25, 0.25}};
        CHECK_THROWS_AS(fit_tps(line, line, 0.0), DegenerateConfigurationError);
        const std::vector<Point2> two{{0, 0}, {1, 1}};
        CHECK_THROWS_AS(fit_tps(two, two, 0.0), DegenerateConfigurationError);
        const auto grid = regular_grid(3);
        CHECK_THROWS_AS(fit_tps(grid, grid, -0.1), std::invalid_argument);
        CHECK_THROWS_AS(fit_tps(grid, std::vector<Point2>(grid.begin(), grid.end() - 1), 0.0), std::invalid_argument);
    }

    TEST_CASE("identity warp leaves images unchanged") {
        const Image img = testing::random_image(13, 17, 3);
        const auto grid = regular_grid(4);
        CHECK(max_abs_diff(apply_warp(fit_tps(grid, grid, 0.01), img), img) <= 1e-6f);
    }

    TEST_CASE("translation of a constant image stays constant") {
        const auto grid = regular_grid(4);
        std::vector<Point2> t;
        for (const auto& g : grid) {
            t.push_back({g.x + 0.13, g.y});
        }
        const Image out = apply_warp(fit_tps(grid, t, 0.0), Image(9, 12, -0.4f));
        for (float v : out.values()) {
            CHECK(v == doctest::Approx(-0.4f).epsilon(1e-6));
        }
    }

    TEST_CASE("warped coordinate ramp matches pointwise evaluation") {
        Rng rng(15);
        const int h = 24;
        const int w = 32;
        const Image ramp = testing::coordinate_image(h, w);
        const auto prob = oracle::random_tps_problem(rng, 4, 0.0, 0.4);
        const TpsWarp tps = fit_tps(prob.grid, prob.targets, 0.01);
        const Image out = apply_warp(tps, ramp);
        // Backward map coefficients from the oracle solve with the roles swapped.
        const auto inv = oracle::tps_dense(prob.targets, prob.grid, 0.01);
        const std::size_t n = prob.grid.size();
        for (int probe = 0; probe < 20; ++probe) {
            const int px = static_cast<int>(rng.uniform() * w);
            const int py = static_cast<int>(rng.uniform() * h);
            const double u = (px + 0.5) / w;
            const double v = (py + 0.5) / h;
            double sx = inv[n][0] + inv[n + 1][0] * u + inv[n + 2][0] * v;
            double sy = inv[n][1] + inv[n + 1][1] * u + inv[n + 2][1] * v;
            for (std::size_t i = 0; i < n; ++i) {
                const double k = oracle::tps_u(u - prob.targets[i].x, v - prob.targets[i].y);
                sx += inv[i][0] * k;
                sy += inv[i][1] * k;
            }
            const double cx = oracle::reflect_pixel(sx * w - 0.5, w);
            const double cy = oracle::reflect_pixel(sy * h - 0.5, h);
            const int x0 = static_cast<int>(std::floor(cx));
            const int y0 = static_cast<int>(std::floor(cy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = cx - x0;
            const double fy = cy - y0;
            for (int c = 0; c < 2; ++c) {
                const double expect = (1 - fy) * ((1 - fx) * ramp.at(c, y0, x0) + fx * ramp.at(c, y0, x1)) +
                                      fy * ((1 - fx) * ramp.at(c, y1, x0) + fx * ramp.at(c, y1, x1));
                CHECK(out.at(c, py, px) == doctest::Approx(expect).epsilon(1e-5));
            }
        }
    }

    TEST_CASE("apply_warp preserves the value range") {
        Rng rng(16);
        for (int trial = 0; trial < 10; ++trial) {
            const auto prob = oracle::random_tps_problem(rng, 4, 0.0, 1.5);
            const Image out = apply_warp(fit_tps(prob.grid, prob.targets, 0.0), testing::random_image(10, 14, trial));
            for (float v : out.values()) {
                CHECK(std::fabs(v) <= 1.0f);
            }
        }
    }

    TEST_CASE("random_tps contracts") {
        AugmentationSpec still;
        still.tps_magnitude = 0.0;
        Rng r0(1);
        const TpsWarp id = random_tps(still, r0);
        CHECK(id.radial_weights.cwiseAbs().maxCoeff() <= 1e-12);

        AugmentationSpec spec;
        Rng a(7);
        Rng b(7);
        const TpsWarp wa = random_tps(spec, a);
        const TpsWarp wb = random_tps(spec, b);
        CHECK(wa.targets == wb.targets);
        CHECK(wa.radial_weights == wb.radial_weights);

        Rng rng(8);
        const double spacing = 1.0 / (spec.tps_grid - 1);
        double worst = 0.0;
        for (int s = 0; s < 1000; ++s) {
            const TpsWarp w = random_tps(spec, rng);
            for (std::size_t i = 0; i < w.targets.size(); ++i) {
                worst = std::max({worst, std::fabs(w.targets[i].x - w.source_grid[i].x),
                                  std::fabs(w.targets[i].y - w.source_grid[i].y)});
            }
        }
        CHECK(worst <= spec.tps_magnitude * spacing);
        CHECK(worst > 0.5 * spec.tps_magnitude * spacing);
    }

    TEST_CASE("augmentation spec validation") {
        AugmentationSpec s;
        s.crop_fraction_range = {0.9, 0.8};
        CHECK_THROWS_AS(s.validate(), std::invalid_argument);
        s = {};
        s.flip_probability = 1.5;
        CHECK_THROWS_AS(s.validate(), std::invalid_argument);
        s = {};
        s.tps_grid = 1;
        CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    }

    TEST_CASE("disabled augmentation is the identity") {
        AugmentationSpec off;
        off.crop_fraction_range = {1.0, 1.0};
        off.flip_probability = 0.0;
        off.tps_magnitude = 0.0;
        const Image img = testing::random_image(15, 21, 4);
        Rng rng(3);
        const AugmentedSample s = augment_sample(img, img, off, rng);
        CHECK(max_abs_diff(s.image, img) <= 1e-6f);
        CHECK(max_abs_diff(*s.condition, img) <= 1e-6f);
    }

    TEST_CASE("paired augmentation keeps image and condition aligned") {
        const int h = 40;
        const int w = 56;
        const Image ramp = testing::coordinate_image(h, w);
        // The condition carries the same coordinates in swapped channels.
        Image swapped(h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                swapped.set(0, y, x, ramp.at(1, y, x));
                swapped.set(1, y, x, ramp.at(0, y, x));
            }
        }
        AugmentationSpec spec;
        spec.flip_probability = 0.5;
        spec.tps_magnitude = 0.3;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const AugmentedSample s = augment_sample(ramp, swapped, spec, rng);
            const TpsWarp inv = inverse_role(s.record.tps);
            double pair_gap = 0.0;
            double geo_gap = 0.0;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double ix = (s.image.at(0, y, x) + 1.0) / 2.0 * (w - 1);
                    const double iy = (s.image.at(1, y, x) + 1.0) / 2.0 * (h - 1);
                    const double cx = (s.condition->at(1, y, x) + 1.0) / 2.0 * (w - 1);
                    const double cy = (s.condition->at(0, y, x) + 1.0) / 2.0 * (h - 1);
                    pair_gap += std::hypot(ix - cx, iy - cy);
                    Point2 q = evaluate_warp(inv, Point2{(x + 0.5) / w, (y + 0.5) / h});
                    if (s.record.flipped) {
                        q.x = 1.0 - q.x;
                    }
                    q = {s.record.crop.x0 + q.x * s.record.crop.width, s.record.crop.y0 + q.y * s.record.crop.height};
                    geo_gap += std::hypot(ix - oracle::reflect_pixel(q.x * w - 0.5, w),
                                          iy - oracle::reflect_pixel(q.y * h - 0.5, h));
                }
            }
            CHECK(pair_gap / (h * w) <= 1e-4);
            CHECK(geo_gap / (h * w) <= 0.5);
        }
    }

    TEST_CASE("source_position follows crop, flip and TPS") {
        AugmentationSpec spec;
        spec.flip_probability = 1.0;
        Rng rng(21);
        const WarpRecord rec = random_warp_record(spec, rng);
        REQUIRE(rec.flipped);
        const TpsWarp inv = inverse_role(rec.tps);
        for (const Point2 p : {Point2{0.1, 0.2}, Point2{0.5, 0.5}, Point2{0.9, 0.7}}) {
            const Point2 t = evaluate_warp(inv, p);
            const Point2 s = rec.source_position(p);
            CHECK(s.x == doctest::Approx(rec.crop.x0 + (1.0 - t.x) * rec.crop.width));
            CHECK(s.y == doctest::Approx(rec.crop.y0 + t.y * rec.crop.height));
        }
    }

    TEST_CASE("augmentation is deterministic and checks dims") {
        const Image img = testing::random_image(20, 24, 1);
        AugmentationSpec spec;
        Rng a(99);
        Rng b(99);
        CHECK(augment_sample(img, std::nullopt, spec, a).image == augment_sample(img, std::nullopt, spec, b).image);
        Rng c(1);
        CHECK_THROWS_AS(augment_sample(img, Image(20, 23), spec, c), std::invalid_argument);
    }

    TEST_CASE("warp records replay through JSON") {
        AugmentationSpec spec;
        Rng rng(5);
        const WarpRecord rec = random_warp_record(spec, rng);
        const WarpRecord back = warp_record_from_json(nlohmann::json::parse(to_json(rec).dump()));
        const Image img = testing::random_image(18, 22, 2);
        CHECK(apply_record(back, img) == apply_record(rec, img));
        CHECK(back.flipped == rec.flipped);
    }
}
