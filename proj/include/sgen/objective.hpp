#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgen/image.hpp"
#include "sgen/model.hpp"
#include "sgen/nn/layers.hpp"
#include "sgen/warp.hpp"

namespace sgen::objective {

using nn::Var;

enum class LossMode { pixel, perceptual };

std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

class MissingWeightsError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kWeightsEnv = "SGEN_WEIGHTS_DIR";
inline constexpr const char* kVggFile = "vgg19.safetensors";

// Resolves `explicit_path` if given, else $SGEN_WEIGHTS_DIR/<file>. Throws
// MissingWeightsError (with export instructions) when nothing is found.
std::filesystem::path resolve_weights(const std::optional<std::filesystem::path>& explicit_path, const char* file);

// VGG19 convolutional trunk (torchvision `features` layout) truncated after
// the fourth max-pool. Inputs are images in [-1,1]; they are mapped to the
// ImageNet-normalized range internally.
template <typename T>
class Vgg19Features {
  public:
    static Vgg19Features load(const std::filesystem::path& path);

    // Activations after pooling stages 1..4 (fewer if the input is too small
    // to pool further).
    std::vector<Var<T>> taps(const Var<T>& image) const;

    std::vector<nn::Conv2d<T>> convs;

  private:
    Vgg19Features() = default;
};

inline constexpr double kPixelTermWeight = 0.1;

// The distance ell(a, b) used by every reconstruction term.
// pixel mode: mean |a - b|.
// perceptual mode: sum over taps of mean |n(F(a)) - n(F(b))| with n the
// per-position channel normalization, plus kPixelTermWeight * mean |a - b|.
template <typename T>
class Distance {
  public:
    static Distance pixel();
    static Distance perceptual(const std::filesystem::path& vgg_weights);
    static Distance make(LossMode mode, const std::optional<std::filesystem::path>& weights = std::nullopt);

    LossMode mode() const { return mode_; }
    Var<T> operator()(const Var<T>& a, const Var<T>& b) const;

  private:
    LossMode mode_ = LossMode::pixel;
    std::shared_ptr<const Vgg19Features<T>> vgg_;
};

double perceptual_distance(const Image& a, const Image& b, const Distance<float>& d);

struct LossReport {
    double upscaling = 0.0;
    double reconstruction_l0 = 0.0;
    double kl = 0.0;
    double total = 0.0;
    std::vector<double> per_level;  // levels 1..N
};

nlohmann::json to_json(const LossReport& r);
LossReport loss_report_from_json(const nlohmann::json& j);

struct UpscalingLoss {
    double total = 0.0;
    std::vector<double> per_level;
};

// Sum over n = 1..N of ell(preds[n-1], pyramid level n).
UpscalingLoss upscaling_loss(const std::vector<Image>& preds, const ImagePyramid& pyramid, const Distance<float>& d);

template <typename T>
struct UpscalingTerms {
    Var<T> total;
    std::vector<Var<T>> per_level;
};

// targets[n-1] is pyramid level n.
template <typename T>
UpscalingTerms<T> upscaling_loss(const std::vector<Var<T>>& preds, const std::vector<Var<T>>& targets,
                                 const Distance<T>& d);

// alpha * sum(z^2).
template <typename T>
Var<T> kl_loss(const Var<T>& z, T alpha);
double kl_loss(const model::LatentCode& z, double alpha);

inline constexpr double kDefaultAlpha = 0.001;

struct TotalLossOptions {
    double alpha = kDefaultAlpha;
    double noise_sigma = model::kDefaultNoiseSigma;
    // Feed the decoded code into G (true) or the real coarsest level (false).
    bool feed_decoded = true;
    nn::Phase phase = nn::Phase::train;
};

template <typename T>
struct LossGraph {
    Var<T> total;
    LossReport report;
};

// Coarsest-level generator input in conditional mode: the condition map
// resampled to the coarsest dims and then re-quantized with the bundle's
// palette (paint) or re-binarized at kEdgeCoverageThreshold (edges).
inline constexpr float kEdgeCoverageThreshold = -0.5f;
template <typename T>
Image coarse_condition(const model::BasicModelBundle<T>& bundle, const Image& condition);

// Builds the full objective for one augmented sample. The sample pyramid is
// the augmented image resampled to the bundle's level dims.
template <typename T>
LossGraph<T> total_loss_graph(model::BasicModelBundle<T>& bundle, const warp::AugmentedSample& sample,
                              const Distance<T>& d, const TotalLossOptions& options, Rng& rng);

// Evaluation without graph recording, eval-phase normalization.
LossReport total_loss(const model::ModelBundle& bundle, const warp::AugmentedSample& sample, double alpha,
                      double noise_sigma, Rng& rng, const Distance<float>& d, bool feed_decoded = true);

}  // namespace sgen::objective
