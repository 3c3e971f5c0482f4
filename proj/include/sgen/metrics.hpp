#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "sgen/image.hpp"

namespace sgen::metrics {

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Maps an image to a (positions x channels) feature matrix.
class FeatureExtractor {
  public:
    virtual ~FeatureExtractor() = default;
    virtual Eigen::MatrixXd features(const Image& img) const = 0;
    virtual std::string id() const = 0;
};

// Every 7x7 window (stride 1, no padding) flattened to 147 values
// (channel-major, then row, then column).
class PatchExtractor final : public FeatureExtractor {
  public:
    static constexpr int kPatch = 7;
    Eigen::MatrixXd features(const Image& img) const override;
    std::string id() const override { return "raw-patch-7x7"; }
};

inline constexpr const char* kInceptionFile = "inception_sifid.safetensors";

// First block of an InceptionV3 (Conv2d_1a, 2a, 2b and the following 3x3
// stride-2 max-pool); 64 channels. Images are fed in [-1,1] unresized.
class InceptionExtractor final : public FeatureExtractor {
  public:
    explicit InceptionExtractor(const std::filesystem::path& weights);
    ~InceptionExtractor() override;
    Eigen::MatrixXd features(const Image& img) const override;
    std::string id() const override { return "inception-v3-block1"; }

  private:
    struct Net;
    std::unique_ptr<Net> net_;
};

// Inception extractor from the explicit path or $SGEN_WEIGHTS_DIR; throws
// objective::MissingWeightsError when absent.
std::unique_ptr<FeatureExtractor> load_inception(const std::optional<std::filesystem::path>& weights = std::nullopt);

// Mean and unbiased (n - 1) covariance over rows.
FeatureStats stats_from_features(const Eigen::MatrixXd& features);
FeatureStats feature_stats(const Image& img, const FeatureExtractor& extractor);

// |mu1 - mu2|^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2)), with the trace of the
// square root taken from the eigenvalues of C1^(1/2) C2 C1^(1/2) (negative
// eigenvalues clipped to 0).
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

double sifid(const Image& a, const Image& b, const FeatureExtractor& extractor);

}  // namespace sgen::metrics
