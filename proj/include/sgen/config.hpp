#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgen/imaging.hpp"
#include "sgen/model.hpp"
#include "sgen/objective.hpp"
#include "sgen/warp.hpp"

namespace sgen::config {

inline constexpr int kSchemaVersion = 1;

// Validation failure listing every offending field.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

  private:
    std::vector<std::string> problems_;
};

struct TrainConfig {
    int version = kSchemaVersion;
    std::string image_path;
    model::Mode mode = model::Mode::unconditional;
    model::ConditionSource condition_source = model::ConditionSource::none;

    long iterations = 20000;
    double lr = 0.0005;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::string schedule = "cosine";  // "cosine" or "constant"
    double grad_clip = 10.0;          // global L2 norm; 0 disables

    double alpha = objective::kDefaultAlpha;
    double noise_sigma = model::kDefaultNoiseSigma;
    bool feed_decoded = true;
    objective::LossMode loss_mode = objective::LossMode::perceptual;
    std::optional<std::string> vgg_weights;

    imaging::PyramidSpec pyramid;
    warp::AugmentationSpec augmentation;
    model::GeneratorConfig generator;
    model::EncoderConfig encoder;

    int palette_size = 5;
    imaging::CannyOptions canny;

    std::uint64_t seed = 0;
    long checkpoint_every = 0;  // 0: final checkpoint only
    int workers = 0;            // sample-preparation threads; 0 prepares inline
};

// Strict parse: unknown keys, wrong types and out-of-range values are all
// collected and reported together. Missing keys take the defaults above,
// except image_path, which is required.
TrainConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig load(const std::filesystem::path& path);

// Throws ConfigError with one entry per problem.
void validate(const TrainConfig& c);

// JSON Schema (draft 2020-12) describing the accepted document.
nlohmann::json schema();

}  // namespace sgen::config
