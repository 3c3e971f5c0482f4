#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sgen/image.hpp"
#include "sgen/rng.hpp"

namespace sgen::warp {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

class DegenerateConfigurationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Thin-plate spline f(p) = a0 + a1*x + a2*y + sum_i w_i U(|p - g_i|) with
// U(d) = d^2 log d^2, fitted in normalized [0,1]^2 coordinates.
struct TpsWarp {
    std::vector<Point2> source_grid;
    std::vector<Point2> targets;
    double lambda = 0.0;
    Eigen::Matrix<double, 3, 2> affine = Eigen::Matrix<double, 3, 2>::Zero();  // rows: 1, x, y
    Eigen::MatrixX2d radial_weights;                                            // one row per control point
};

inline constexpr double kDefaultLambda = 0.01;

double tps_kernel(double squared_distance);

std::vector<Point2> regular_grid(int size);

TpsWarp fit_tps(std::span<const Point2> source_grid, std::span<const Point2> targets, double lambda);
Point2 evaluate_warp(const TpsWarp& warp, Point2 p);
std::vector<Point2> evaluate_warp(const TpsWarp& warp, std::span<const Point2> points);
// Sum over both output coordinates of w^T K w.
double bending_energy(const TpsWarp& warp);

// The same control points with source and target swapped; maps output
// positions back to where they sample the source.
TpsWarp inverse_role(const TpsWarp& warp);

// Reflect-padded bilinear sample at continuous pixel coordinates.
float sample_bilinear(const Image& img, int channel, double px, double py);

// Backward warp: each output pixel samples the source at inverse_role(warp).
Image apply_warp(const TpsWarp& warp, const Image& img);

struct AugmentationSpec {
    std::pair<double, double> crop_fraction_range{0.85, 1.0};
    double flip_probability = 0.5;
    double tps_magnitude = 0.1;
    int tps_grid = 4;
    double tps_lambda = kDefaultLambda;
    std::uint64_t seed = 0;

    void validate() const;
};

TpsWarp random_tps(const AugmentationSpec& spec, Rng& rng);

// Normalized crop box.
struct CropBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double width = 1.0;
    double height = 1.0;
};

struct WarpRecord {
    TpsWarp tps;
    CropBox crop;
    bool flipped = false;

    // Source position (normalized) sampled by output position p.
    Point2 source_position(Point2 p) const;
};

struct AugmentedSample {
    Image image;
    std::optional<Image> condition;
    WarpRecord record;
};

// Crop (resized back to the input dims), horizontal flip, then TPS. The
// composite map is resampled once; the condition goes through the
// identical geometric transform.
AugmentedSample augment_sample(const Image& img, const std::optional<Image>& condition,
                               const AugmentationSpec& spec, Rng& rng);
WarpRecord random_warp_record(const AugmentationSpec& spec, Rng& rng);
Image apply_record(const WarpRecord& record, const Image& img);

nlohmann::json to_json(const WarpRecord& record);
WarpRecord warp_record_from_json(const nlohmann::json& j);

}  // namespace sgen::warp
