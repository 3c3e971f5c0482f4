#include "sgen/warp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sgen::warp {

double tps_kernel(double r2) { return r2 <= 0.0 ? 0.0 : r2 * std::log(r2); }

std::vector<Point2> regular_grid(int size) {
    if (size < 2) {
        throw std::invalid_argument("TPS grid size must be at least 2");
    }
    std::vector<Point2> grid;
    grid.reserve(static_cast<std::size_t>(size) * size);
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            grid.push_back({static_cast<double>(j) / (size - 1), static_cast<double>(i) / (size - 1)});
        }
    }
    return grid;
}

namespace {

double sq(double v) { return v * v; }

double dist2(Point2 a, Point2 b) { return sq(a.x - b.x) + sq(a.y - b.y); }

}  // namespace

TpsWarp fit_tps(std::span<const Point2> source_grid, std::span<const Point2> targets, double lambda) {
    const auto n = static_cast<Eigen::Index>(source_grid.size());
    if (static_cast<std::size_t>(n) != targets.size()) {
        throw std::invalid_argument("TPS needs one target per control point");
    }
    if (n < 3) {
        throw DegenerateConfigurationError("TPS needs at least 3 control points, got " + std::to_string(n));
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw std::invalid_argument("TPS smoothness weight must be finite and >= 0");
    }

    Eigen::MatrixXd p(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        p.row(i) << 1.0, source_grid[i].x, source_grid[i].y;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> p_rank(p);
    if (p_rank.rank() < 3) {
        throw DegenerateConfigurationError("TPS control points are collinear");
    }

    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            system(i, j) = tps_kernel(dist2(source_grid[i], source_grid[j]));
        }
        system(i, i) += lambda;
        rhs(i, 0) = targets[i].x;
        rhs(i, 1) = targets[i].y;
    }
    system.block(0, n, n, 3) = p;
    system.block(n, 0, 3, n) = p.transpose();

    Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    if (!lu.isInvertible()) {
        throw DegenerateConfigurationError("TPS system is singular (degenerate control-point layout)");
    }
    const Eigen::MatrixXd sol = lu.solve(rhs);

    TpsWarp warp;
    warp.source_grid.assign(source_grid.begin(), source_grid.end());
    warp.targets.assign(targets.begin(), targets.end());
    warp.lambda = lambda;
    warp.radial_weights = sol.topRows(n);
    warp.affine = sol.bottomRows(3);
    return warp;
}

Point2 evaluate_warp(const TpsWarp& warp, Point2 p) {
    double x = warp.affine(0, 0) + warp.affine(1, 0) * p.x + warp.affine(2, 0) * p.y;
    double y = warp.affine(0, 1) + warp.affine(1, 1) * p.x + warp.affine(2, 1) * p.y;
    for (std::size_t i = 0; i < warp.source_grid.size(); ++i) {
        const double u = tps_kernel(dist2(p, warp.source_grid[i]));
        x += warp.radial_weights(static_cast<Eigen::Index>(i), 0) * u;
        y += warp.radial_weights(static_cast<Eigen::Index>(i), 1) * u;
    }
    return {x, y};
}

std::vector<Point2> evaluate_warp(const TpsWarp& warp, std::span<const Point2> points) {
    std::vector<Point2> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        out.push_back(evaluate_warp(warp, p));
    }
    return out;
}

double bending_energy(const TpsWarp& warp) {
    const auto n = static_cast<Eigen::Index>(warp.source_grid.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            k(i, j) = tps_kernel(dist2(warp.source_grid[i], warp.source_grid[j]));
        }
    }
    const Eigen::MatrixXd& w = warp.radial_weights;
    const double e = (w.transpose() * k * w).trace();
    return std::max(0.0, e);
}

TpsWarp inverse_role(const TpsWarp& warp) { return fit_tps(warp.targets, warp.source_grid, warp.lambda); }

namespace {

double reflect_coord(double c, int n) {
    if (n == 1) {
        return 0.0;
    }
    // Mirror about the outer pixel edges (-0.5 and n - 0.5).
    const double period = 2.0 * n;
    double t = std::fmod(c + 0.5, period);
    if (t < 0.0) {
        t += period;
    }
    if (t >= n) {
        t = period - t;
    }
    return std::clamp(t - 0.5, 0.0, static_cast<double>(n - 1));
}

}  // namespace

float sample_bilinear(const Image& img, int channel, double px, double py) {
    const double x = reflect_coord(px, img.width());
    const double y = reflect_coord(py, img.height());
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * img.at(channel, y0, x0) + fx * img.at(channel, y0, x1);
    const double bottom = (1.0 - fx) * img.at(channel, y1, x0) + fx * img.at(channel, y1, x1);
    return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

namespace {

template <typename Map>
Image resample_through(const Image& img, Map&& source_of) {
    const int h = img.height();
    const int w = img.width();
    std::vector<float> out(static_cast<std::size_t>(Image::kChannels) * h * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Point2 q = source_of(Point2{(x + 0.5) / w, (y + 0.5) / h});
            const double sx = q.x * w - 0.5;
            const double sy = q.y * h - 0.5;
            for (int c = 0; c < Image::kChannels; ++c) {
                out[(static_cast<std::size_t>(c) * h + y) * w + x] = sample_bilinear(img, c, sx, sy);
            }
        }
    }
    return Image::from_planar(h, w, std::move(out));
}

}  // namespace

Image apply_warp(const TpsWarp& warp, const Image& img) {
    const TpsWarp inverse = inverse_role(warp);
    return resample_through(img, [&](Point2 p) { return evaluate_warp(inverse, p); });
}

void AugmentationSpec::validate() const {
    const auto [lo, hi] = crop_fraction_range;
    if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) {
        throw std::invalid_argument("crop_fraction_range must satisfy 0 < lo <= hi <= 1");
    }
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
        throw std::invalid_argument("flip_probability must lie in [0,1]");
    }
    if (!(tps_magnitude >= 0.0)) {
        throw std::invalid_argument("tps_magnitude must be >= 0");
    }
    if (tps_grid < 2) {
        throw std::invalid_argument("tps_grid must be >= 2");
    }
    if (!(tps_lambda >= 0.0)) {
        throw std::invalid_argument("tps_lambda must be >= 0");
    }
}

TpsWarp random_tps(const AugmentationSpec& spec, Rng& rng) {
    spec.validate();
    const auto grid = regular_grid(spec.tps_grid);
    const double m = spec.tps_magnitude / (spec.tps_grid - 1);
    std::vector<Point2> targets;
    targets.reserve(grid.size());
    for (const auto& g : grid) {
        const double dx = rng.uniform(-m, m);
        const double dy = rng.uniform(-m, m);
        targets.push_back({g.x + dx, g.y + dy});
    }
    return fit_tps(grid, targets, spec.tps_lambda);
}

namespace {

Point2 crop_flip(const WarpRecord& record, Point2 q) {
    if (record.flipped) {
        q.x = 1.0 - q.x;
    }
    return {record.crop.x0 + q.x * record.crop.width, record.crop.y0 + q.y * record.crop.height};
}

}  // namespace

Point2 WarpRecord::source_position(Point2 p) const {
    // Inverse-role TPS is refitted per call; callers mapping many points
    // should go through apply_record.
    return crop_flip(*this, evaluate_warp(inverse_role(tps), p));
}

WarpRecord random_warp_record(const AugmentationSpec& spec, Rng& rng) {
    spec.validate();
    WarpRecord rec;
    const double area = rng.uniform(spec.crop_fraction_range.first, spec.crop_fraction_range.second);
    const double side = std::sqrt(area);
    rec.crop.width = side;
    rec.crop.height = side;
    rec.crop.x0 = rng.uniform(0.0, 1.0 - side);
    rec.crop.y0 = rng.uniform(0.0, 1.0 - side);
    rec.flipped = rng.bernoulli(spec.flip_probability);
    rec.tps = random_tps(spec, rng);
    return rec;
}

Image apply_record(const WarpRecord& record, const Image& img) {
    const TpsWarp inverse = inverse_role(record.tps);
    return resample_through(img, [&](Point2 p) { return crop_flip(record, evaluate_warp(inverse, p)); });
}

AugmentedSample augment_sample(const Image& img, const std::optional<Image>& condition,
                               const AugmentationSpec& spec, Rng& rng) {
    if (condition && condition->dims() != img.dims()) {
        throw std::invalid_argument("condition dims must match image dims for paired augmentation");
    }
    AugmentedSample s;
    s.record = random_warp_record(spec, rng);
    s.image = apply_record(s.record, img);
    if (condition) {
        s.condition = apply_record(s.record, *condition);
    }
    return s;
}

namespace {

nlohmann::json points_json(const std::vector<Point2>& pts) {
    auto arr = nlohmann::json::array();
    for (const auto& p : pts) {
        arr.push_back({p.x, p.y});
    }
    return arr;
}

std::vector<Point2> points_from(const nlohmann::json& arr) {
    std::vector<Point2> pts;
    for (const auto& p : arr) {
        pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    return pts;
}

}  // namespace

nlohmann::json to_json(const WarpRecord& record) {
    return {
        {"grid", points_json(record.tps.source_grid)},
        {"targets", points_json(record.tps.targets)},
        {"lambda", record.tps.lambda},
        {"crop", {{"x0", record.crop.x0}, {"y0", record.crop.y0}, {"width", record.crop.width},
                  {"height", record.crop.height}}},
        {"flipped", record.flipped},
    };
}

WarpRecord warp_record_from_json(const nlohmann::json& j) {
    WarpRecord rec;
    const auto grid = points_from(j.at("grid"));
    const auto targets = points_from(j.at("targets"));
    rec.tps = fit_tps(grid, targets, j.at("lambda").get<double>());
    const auto& c = j.at("crop");
    rec.crop = {c.at("x0").get<double>(), c.at("y0").get<double>(), c.at("width").get<double>(),
                c.at("height").get<double>()};
    rec.flipped = j.at("flipped").get<bool>();
    return rec;
}

}  // namespace sgen::warp
