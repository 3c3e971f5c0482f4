#include "sgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sgen/nn/layers.hpp"
#include "sgen/nn/safetensors.hpp"
#include "sgen/objective.hpp"

namespace sgen::metrics {

namespace fs = std::filesystem;

Eigen::MatrixXd PatchExtractor::features(const Image& img) const {
    const int oh = img.height() - kPatch + 1;
    const int ow = img.width() - kPatch + 1;
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("image smaller than the 7x7 patch window");
    }
    Eigen::MatrixXd f(static_cast<Eigen::Index>(oh) * ow, 3 * kPatch * kPatch);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const Eigen::Index row = static_cast<Eigen::Index>(y) * ow + x;
            Eigen::Index col = 0;
            for (int c = 0; c < 3; ++c) {
                for (int dy = 0; dy < kPatch; ++dy) {
                    for (int dx = 0; dx < kPatch; ++dx) {
                        f(row, col++) = img.at(c, y + dy, x + dx);
                    }
                }
            }
        }
    }
    return f;
}

struct InceptionExtractor::Net {
    struct Unit {
        nn::Conv2d<float> conv;
        nn::BatchNorm2d<float> bn;
    };
    std::vector<Unit> units;
};

InceptionExtractor::InceptionExtractor(const fs::path& weights) : net_(std::make_unique<Net>()) {
    const auto tensors = nn::safetensors::read<float>(weights);
    struct Spec {
        const char* name;
        int in;
        int out;
        int stride;
        int pad;
    };
    const Spec specs[] = {{"Conv2d_1a_3x3", 3, 32, 2, 0}, {"Conv2d_2a_3x3", 32, 32, 1, 0}, {"Conv2d_2b_3x3", 32, 64, 1, 1}};
    auto get = [&](const std::string& key, const std::vector<int>& shape) {
        auto it = tensors.find(key);
        if (it == tensors.end()) {
            throw objective::MissingWeightsError(weights.string() + " lacks " + key +
                                                 "; is it an InceptionV3 export from tools/export_weights.py?");
        }
        if (it->second.shape() != shape) {
            throw objective::MissingWeightsError(weights.string() + ": " + key + " has shape " +
                                                 nn::shape_str(it->second.shape()) + ", expected " + nn::shape_str(shape));
        }
        return it->second;
    };
    for (const auto& s : specs) {
        Net::Unit u;
        const std::string base = s.name;
        u.conv.weight = nn::Var<float>(get(base + ".conv.weight", {s.out, s.in, 3, 3}), false);
        u.conv.stride = s.stride;
        u.conv.padding = s.pad;
        u.conv.mode = nn::PadMode::zeros;
        u.bn.gamma = nn::Var<float>(get(base + ".bn.weight", {s.out}), false);
        u.bn.beta = nn::Var<float>(get(base + ".bn.bias", {s.out}), false);
        u.bn.running_mean = get(base + ".bn.running_mean", {s.out});
        u.bn.running_var = get(base + ".bn.running_var", {s.out});
        u.bn.eps = 0.001f;
        net_->units.push_back(std::move(u));
    }
}

InceptionExtractor::~InceptionExtractor() = default;

Eigen::MatrixXd InceptionExtractor::features(const Image& img) const {
    nn::NoGradGuard guard;
    nn::Var<float> h(nn::from_image<float>(img));
    for (const auto& u : net_->units) {
        h = nn::relu(u.bn.forward(u.conv.forward(h)));
    }
    h = nn::max_pool2d(h, 3, 2);
    const auto& t = h.value();
    const int c = t.dim(0);
    const Eigen::Index n = static_cast<Eigen::Index>(t.dim(1)) * t.dim(2);
    Eigen::MatrixXd f(n, c);
    for (int ch = 0; ch < c; ++ch) {
        for (Eigen::Index i = 0; i < n; ++i) {
            f(i, ch) = t[static_cast<std::size_t>(ch) * n + i];
        }
    }
    return f;
}

std::unique_ptr<FeatureExtractor> load_inception(const std::optional<fs::path>& weights) {
    return std::make_unique<InceptionExtractor>(objective::resolve_weights(weights, kInceptionFile));
}

FeatureStats stats_from_features(const Eigen::MatrixXd& features) {
    if (features.rows() < 1 || features.cols() < 1) {
        throw std::invalid_argument("feature matrix is empty");
    }
    FeatureStats s;
    s.mean = features.colwise().mean().transpose();
    const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
    const double denom = features.rows() > 1 ? static_cast<double>(features.rows() - 1) : 1.0;
    s.cov = (centered.transpose() * centered) / denom;
    s.cov = 0.5 * (s.cov + s.cov.transpose());
    return s;
}

FeatureStats feature_stats(const Image& img, const FeatureExtractor& extractor) {
    return stats_from_features(extractor.features(img));
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows() || a.cov.rows() != a.mean.size() ||
        b.cov.rows() != b.mean.size()) {
        throw std::invalid_argument("frechet_distance: feature dimensions differ (" + std::to_string(a.mean.size()) +
                                    " vs " + std::to_string(b.mean.size()) + ")");
    }
    const Eigen::MatrixXd s1 = psd_sqrt(a.cov);
    const Eigen::MatrixXd inner = s1 * b.cov * s1;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    return std::max(d, 0.0);
}

double sifid(const Image& a, const Image& b, const FeatureExtractor& extractor) {
    return frechet_distance(feature_stats(a, extractor), feature_stats(b, extractor));
}

}  // namespace sgen::metrics
