#include "sgen/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace sgen::imaging {

namespace fs = std::filesystem;

Image load_image(const fs::path& path) {
    if (!fs::exists(path)) {
        throw std::runtime_error("image file not found: " + path.string());
    }
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw std::runtime_error("cannot decode image (expected an 8-bit RGB PNG or JPEG): " + path.string());
    }
    if (bgr.depth() != CV_8U) {
        throw std::runtime_error("unsupported pixel depth in " + path.string() + " (need 8-bit)");
    }
    Image img(bgr.rows, bgr.cols);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            for (int c = 0; c < 3; ++c) {
                // OpenCV stores BGR.
                img.set(c, y, x, static_cast<float>(row[x][2 - c]) / 127.5f - 1.0f);
            }
        }
    }
    return img;
}

void save_image(const Image& img, const fs::path& path) {
    if (img.empty()) {
        throw std::invalid_argument("cannot save an empty image");
    }
    cv::Mat bgr(img.height(), img.width(), CV_8UC3);
    for (int y = 0; y < img.height(); ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::round((static_cast<double>(img.at(c, y, x)) + 1.0) * 127.5);
                row[x][2 - c] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), bgr);
    } catch (const cv::Exception& e) {
        throw std::runtime_error("cannot write image " + path.string() + ": " + e.what());
    }
    if (!ok) {
        throw std::runtime_error("cannot write image " + path.string());
    }
}

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) {
        return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    }
    if (t < 2.0) {
        return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    }
    return 0.0;
}

Eigen::MatrixXd resample_matrix(int in_size, int out_size) {
    if (in_size < 1 || out_size < 1) {
        throw std::invalid_argument("resample sizes must be positive");
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out_size, in_size);
    if (in_size == out_size) {
        m.setIdentity();
        return m;
    }
    const double scale = static_cast<double>(out_size) / in_size;
    const double stretch = scale < 1.0 ? scale : 1.0;
    const double support = 2.0 / stretch;
    for (int i = 0; i < out_size; ++i) {
        const double src = (i + 0.5) / scale - 0.5;
        const int lo = static_cast<int>(std::floor(src - support)) + 1;
        const int hi = static_cast<int>(std::ceil(src + support)) - 1;
        double total = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double w = cubic_kernel((src - j) * stretch);
            if (w == 0.0) {
                continue;
            }
            const int idx = std::clamp(j, 0, in_size - 1);
            m(i, idx) += w;
            total += w;
        }
        m.row(i) /= total;
    }
    return m;
}

Image resample(const Image& img, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1) {
        throw std::invalid_argument("resample target dims must be positive, got " + std::to_string(target_h) +
                                    "x" + std::to_string(target_w));
    }
    if (target_h == img.height() && target_w == img.width()) {
        return img;
    }
    const Eigen::MatrixXd rh = resample_matrix(img.height(), target_h);
    const Eigen::MatrixXd rw = resample_matrix(img.width(), target_w);
    std::vector<float> out(static_cast<std::size_t>(Image::kChannels) * target_h * target_w);
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (int c = 0; c < Image::kChannels; ++c) {
        auto p = img.plane(c);
        RowMat src(img.height(), img.width());
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                src(y, x) = p[static_cast<std::size_t>(y) * img.width() + x];
            }
        }
        const RowMat dst = rh * src * rw.transpose();
        for (int y = 0; y < target_h; ++y) {
            for (int x = 0; x < target_w; ++x) {
                out[(static_cast<std::size_t>(c) * target_h + y) * target_w + x] = static_cast<float>(dst(y, x));
            }
        }
    }
    return Image::from_planar(target_h, target_w, std::move(out));
}

int pyramid_level_count(int min_side, double scale_factor, int min_dim) {
    if (!(scale_factor > 0.0 && scale_factor < 1.0)) {
        throw std::invalid_argument("pyramid scale factor must lie in (0,1), got " + std::to_string(scale_factor));
    }
    if (min_dim < 1) {
        throw std::invalid_argument("pyramid min_dim must be positive");
    }
    if (min_dim > min_side) {
        throw std::invalid_argument("pyramid min_dim " + std::to_string(min_dim) +
                                    " exceeds the image's shorter side " + std::to_string(min_side));
    }
    const double steps = std::log(static_cast<double>(min_dim) / min_side) / std::log(scale_factor);
    return static_cast<int>(std::ceil(steps - 1e-9)) + 1;
}

std::vector<Dims> pyramid_dims(Dims finest, const PyramidSpec& spec) {
    const int levels = pyramid_level_count(finest.min_side(), spec.scale_factor, spec.min_dim);
    const int n = levels - 1;
    std::vector<Dims> dims(levels);
    dims[n] = finest;
    if (n == 0) {
        return dims;
    }
    const double ratio = std::pow(static_cast<double>(spec.min_dim) / finest.min_side(), 1.0 / n);
    for (int level = n - 1; level >= 0; --level) {
        const double s = std::pow(ratio, n - level);
        Dims d{static_cast<int>(std::lround(finest.height * s)), static_cast<int>(std::lround(finest.width * s))};
        d.height = std::clamp(d.height, 1, dims[level + 1].height - 1 > 0 ? dims[level + 1].height - 1 : 1);
        d.width = std::clamp(d.width, 1, dims[level + 1].width - 1 > 0 ? dims[level + 1].width - 1 : 1);
        dims[level] = d;
    }
    return dims;
}

Image preshrink(const Image& img, int max_dim) {
    const int longest = std::max(img.height(), img.width());
    if (max_dim < 1 || longest <= max_dim) {
        return img;
    }
    const double s = static_cast<double>(max_dim) / longest;
    return resample(img, std::max(1, static_cast<int>(std::lround(img.height() * s))),
                    std::max(1, static_cast<int>(std::lround(img.width() * s))));
}

ImagePyramid build_pyramid_with_dims(const Image& img, const std::vector<Dims>& dims) {
    ImagePyramid pyr;
    pyr.levels.reserve(dims.size());
    for (const auto& d : dims) {
        pyr.levels.push_back(resample(img, d));
    }
    if (dims.size() > 1) {
        pyr.scale_factor = std::pow(static_cast<double>(dims.front().min_side()) / dims.back().min_side(),
                                    1.0 / static_cast<double>(dims.size() - 1));
    }
    return pyr;
}

ImagePyramid build_pyramid(const Image& img, const PyramidSpec& spec) {
    const Image base = preshrink(img, spec.max_dim);
    ImagePyramid pyr = build_pyramid_with_dims(base, pyramid_dims(base.dims(), spec));
    if (pyr.num_levels() == 1) {
        pyr.scale_factor = spec.scale_factor;
    }
    return pyr;
}

ImagePyramid build_pyramid(const Image& img, double scale_factor, int min_dim, int max_dim) {
    return build_pyramid(img, PyramidSpec{scale_factor, min_dim, max_dim});
}

namespace {

double sq_dist(const Rgb& a, const Rgb& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a[c]) - b[c];
        s += d * d;
    }
    return s;
}

std::vector<Rgb> pixels_of(const Image& img) {
    std::vector<Rgb> px;
    px.reserve(img.plane_size());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            px.push_back(img.pixel(y, x));
        }
    }
    return px;
}

std::size_t nearest(const std::vector<Rgb>& colors, const Rgb& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < colors.size(); ++k) {
        const double d = sq_dist(colors[k], p);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

struct KMeansRun {
    std::vector<Rgb> centers;
    double inertia = 0.0;
};

KMeansRun kmeans_once(const std::vector<Rgb>& px, int k, std::mt19937_64& rng, int max_iterations) {
    KMeansRun run;
    std::uniform_int_distribution<std::size_t> pick(0, px.size() - 1);
    run.centers.push_back(px[pick(rng)]);
    std::vector<double> d2(px.size());
    while (static_cast<int>(run.centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < px.size(); ++i) {
            d2[i] = sq_dist(run.centers[nearest(run.centers, px[i])], px[i]);
            total += d2[i];
        }
        if (total <= 0.0) {
            break;
        }
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        std::size_t chosen = px.size() - 1;
        for (std::size_t i = 0; i < px.size(); ++i) {
            target -= d2[i];
            if (target <= 0.0 && d2[i] > 0.0) {
                chosen = i;
                break;
            }
        }
        run.centers.push_back(px[chosen]);
    }

    std::vector<std::size_t> assign(px.size(), 0);
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = it == 0;
        for (std::size_t i = 0; i < px.size(); ++i) {
            const std::size_t a = nearest(run.centers, px[i]);
            changed = changed || a != assign[i];
            assign[i] = a;
        }
        std::vector<std::array<double, 3>> sums(run.centers.size(), {0.0, 0.0, 0.0});
        std::vector<std::size_t> counts(run.centers.size(), 0);
        for (std::size_t i = 0; i < px.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                sums[assign[i]][c] += px[i][c];
            }
            ++counts[assign[i]];
        }
        for (std::size_t k2 = 0; k2 < run.centers.size(); ++k2) {
            if (counts[k2] == 0) {
                // Re-seed an empty cluster at the worst-fit pixel.
                std::size_t worst = 0;
                double worst_d = -1.0;
                for (std::size_t i = 0; i < px.size(); ++i) {
                    const double d = sq_dist(run.centers[assign[i]], px[i]);
                    if (d > worst_d) {
                        worst_d = d;
                        worst = i;
                    }
                }
                run.centers[k2] = px[worst];
                changed = true;
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                run.centers[k2][c] = static_cast<float>(sums[k2][c] / static_cast<double>(counts[k2]));
            }
        }
        if (!changed) {
            break;
        }
    }
    run.inertia = 0.0;
    for (const auto& p : px) {
        run.inertia += sq_dist(run.centers[nearest(run.centers, p)], p);
    }
    return run;
}

}  // namespace

Palette fit_palette(const Image& img, int k, const QuantizeOptions& opts) {
    if (k < 2) {
        throw std::invalid_argument("palette size must be at least 2, got " + std::to_string(k));
    }
    const auto px = pixels_of(img);
    std::set<Rgb> distinct(px.begin(), px.end());
    if (static_cast<int>(distinct.size()) <= k) {
        return Palette{{distinct.begin(), distinct.end()}};
    }
    KMeansRun best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(r) * 0x9E3779B97F4A7C15ULL);
        KMeansRun run = kmeans_once(px, k, rng, opts.max_iterations);
        if (run.inertia < best.inertia) {
            best = std::move(run);
        }
    }
    return Palette{best.centers};
}

Image apply_palette(const Image& img, const Palette& palette) {
    if (palette.colors.empty()) {
        throw std::invalid_argument("empty palette");
    }
    Image out(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out.set_pixel(y, x, palette.colors[nearest(palette.colors, img.pixel(y, x))]);
        }
    }
    return out;
}

double quantization_error(const Image& img, const Palette& palette) {
    double err = 0.0;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const Rgb p = img.pixel(y, x);
            err += sq_dist(palette.colors[nearest(palette.colors, p)], p);
        }
    }
    return err;
}

Image quantize_colors(const Image& img, int k, const QuantizeOptions& opts) {
    return apply_palette(img, fit_palette(img, k, opts));
}

std::size_t count_distinct_colors(const Image& img) {
    const auto px = pixels_of(img);
    return std::set<Rgb>(px.begin(), px.end()).size();
}

namespace {

using Plane = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane grayscale(const Image& img) {
    Plane g(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const double r = (img.at(0, y, x) + 1.0) * 0.5;
            const double gr = (img.at(1, y, x) + 1.0) * 0.5;
            const double b = (img.at(2, y, x) + 1.0) * 0.5;
            g(y, x) = 0.299 * r + 0.587 * gr + 0.114 * b;
        }
    }
    return g;
}

Plane gaussian_blur(const Plane& src, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += k[i + radius];
    }
    for (auto& v : k) {
        v /= total;
    }
    const int h = static_cast<int>(src.rows());
    const int w = static_cast<int>(src.cols());
    Plane tmp(h, w);
    Plane out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                s += k[i + radius] * src(y, std::clamp(x + i, 0, w - 1));
            }
            tmp(y, x) = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                s += k[i + radius] * tmp(std::clamp(y + i, 0, h - 1), x);
            }
            out(y, x) = s;
        }
    }
    return out;
}

}  // namespace

Image extract_edges(const Image& img, double low_thresh, double high_thresh, double sigma) {
    if (!(low_thresh >= 0.0 && low_thresh < high_thresh)) {
        throw std::invalid_argument("Canny thresholds must satisfy 0 <= low < high, got low=" +
                                    std::to_string(low_thresh) + " high=" + std::to_string(high_thresh));
    }
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("Canny sigma must be positive");
    }
    const int h = img.height();
    const int w = img.width();
    const Plane smooth = gaussian_blur(grayscale(img), sigma);
    auto at = [&](int y, int x) { return smooth(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };

    Plane mag(h, w);
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dir(h, w);
    double max_mag = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            const double gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            mag(y, x) = std::hypot(gx, gy);
            max_mag = std::max(max_mag, mag(y, x));
            double angle = std::atan2(gy, gx) * 180.0 / M_PI;
            if (angle < 0.0) {
                angle += 180.0;
            }
            // 0: horizontal gradient, 1: 45 deg, 2: vertical, 3: 135 deg.
            dir(y, x) = angle < 22.5 || angle >= 157.5 ? 0 : angle < 67.5 ? 1 : angle < 112.5 ? 2 : 3;
        }
    }

    Image out(h, w, -1.0f);
    if (max_mag <= 1e-12) {
        return out;
    }
    mag /= max_mag;

    // Non-maximum suppression. Equal neighbours along the gradient are
    // resolved in favour of the pixel further along the gradient direction.
    constexpr double tie = 1e-9;
    static constexpr int kStep[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};
    auto mag_at = [&](int y, int x) { return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : mag(y, x); };
    Plane thin = Plane::Zero(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double m = mag(y, x);
            const int dy = kStep[dir(y, x)][0];
            const int dx = kStep[dir(y, x)][1];
            const double prev = mag_at(y - dy, x - dx);
            const double next = mag_at(y + dy, x + dx);
            if (m >= prev - tie && m > next + tie) {
                thin(y, x) = m;
            }
        }
    }

    std::vector<char> edge(static_cast<std::size_t>(h) * w, 0);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (thin(y, x) >= high_thresh) {
                edge[static_cast<std::size_t>(y) * w + x] = 1;
                queue.emplace_back(y, x);
            }
        }
    }
    while (!queue.empty()) {
        const auto [y, x] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy;
                const int nx = x + dx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) {
                    continue;
                }
                auto& e = edge[static_cast<std::size_t>(ny) * w + nx];
                if (!e && thin(ny, nx) >= low_thresh && thin(ny, nx) > 0.0) {
                    e = 1;
                    queue.emplace_back(ny, nx);
                }
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (edge[static_cast<std::size_t>(y) * w + x]) {
                out.set_pixel(y, x, {1.0f, 1.0f, 1.0f});
            }
        }
    }
    return out;
}

Image binarize(const Image& img, float threshold) {
    Image out(img.height(), img.width(), -1.0f);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const float v = (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0f;
            if (v > threshold) {
                out.set_pixel(y, x, {1.0f, 1.0f, 1.0f});
            }
        }
    }
    return out;
}

bool is_binary(const Image& img) {
    return std::all_of(img.values().begin(), img.values().end(), [](float v) { return v == -1.0f || v == 1.0f; });
}

Image hconcat(const std::vector<Image>& images) {
    if (images.empty()) {
        throw std::invalid_argument("hconcat needs at least one image");
    }
    const int h = images.front().height();
    int w = 0;
    for (const auto& im : images) {
        if (im.height() != h) {
            throw std::invalid_argument("hconcat inputs must share a height");
        }
        w += im.width();
    }
    Image out(h, w);
    int offset = 0;
    for (const auto& im : images) {
        for (int c = 0; c < Image::kChannels; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < im.width(); ++x) {
                    out.set(c, y, offset + x, im.at(c, y, x));
                }
            }
        }
        offset += im.width();
    }
    return out;
}

}  // namespace sgen::imaging
