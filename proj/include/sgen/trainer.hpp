#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgen/config.hpp"
#include "sgen/model.hpp"
#include "sgen/nn/adam.hpp"
#include "sgen/objective.hpp"
#include "sgen/warp.hpp"

namespace sgen::trainer {

struct LogEntry {
    long iteration = 0;  // 0-based
    double lr = 0.0;
    double grad_norm = 0.0;
    objective::LossReport report;
};

nlohmann::json to_json(const LogEntry& e);
LogEntry log_entry_from_json(const nlohmann::json& j);

class NonFiniteLossError : public std::runtime_error {
  public:
    NonFiniteLossError(const std::string& what, std::filesystem::path snapshot)
        : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
    // Directory holding the diagnostic snapshot (empty if none was written).
    const std::filesystem::path& snapshot() const { return snapshot_; }

  private:
    std::filesystem::path snapshot_;
};

// lr at 0-based iteration i.
double learning_rate(const config::TrainConfig& c, long i);

// The training image after the max_dim pre-shrink.
Image prepare_image(const Image& raw, const config::TrainConfig& c);

// Full-resolution conditioning map for the configured source (quantized
// image or Canny edges), and the palette when quantizing.
struct Conditioning {
    Image map;
    std::optional<imaging::Palette> palette;
};
Conditioning make_conditioning(const Image& image, const config::TrainConfig& c);

// Re-applies the condition contract after warping (binary edges, palette
// colors), since bilinear resampling blends values at boundaries.
Image restore_condition(const Image& warped, model::ConditionSource source,
                        const std::optional<imaging::Palette>& palette);

struct TrainOptions {
    // When set: <run_dir>/train_log.jsonl, <run_dir>/checkpoints/iter_<k>,
    // <run_dir>/final.
    std::optional<std::filesystem::path> run_dir;
    // Overrides TrainConfig::loss_mode-derived distance (tests inject one).
    std::optional<objective::Distance<float>> distance;
};

class Trainer {
  public:
    // `image` is the decoded training image (pre-shrink is applied here).
    Trainer(const config::TrainConfig& c, const Image& image, TrainOptions options = {});
    ~Trainer();
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    // Loads the image named by the config.
    static std::unique_ptr<Trainer> from_config(const config::TrainConfig& c, TrainOptions options = {});
    // Restores weights, optimizer moments and the iteration counter from a
    // directory written by save_checkpoint.
    static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint_dir, TrainOptions options = {});

    const LogEntry& step();
    // Runs until `until` iterations are done (default: the configured count).
    void run(std::optional<long> until = std::nullopt);

    long iteration() const { return iteration_; }
    bool done() const { return iteration_ >= config_.iterations; }
    const config::TrainConfig& config() const { return config_; }
    const model::ModelBundle& bundle() const { return bundle_; }
    model::ModelBundle& mutable_bundle() { return bundle_; }
    const std::vector<LogEntry>& log() const { return log_; }
    const Image& training_image() const { return image_; }
    const std::optional<Image>& condition_map() const { return condition_; }

    // The augmented sample used at 0-based iteration i.
    warp::AugmentedSample sample_for(long i) const;

    void save_checkpoint(const std::filesystem::path& dir) const;

  private:
    Trainer(const config::TrainConfig& c, const Image& image, TrainOptions options, model::ModelBundle bundle);
    void init_optimizer();
    std::filesystem::path write_snapshot(long i, const objective::LossReport& report, const warp::AugmentedSample& s,
                                         const std::string& reason);
    warp::AugmentedSample next_sample();

    config::TrainConfig config_;
    TrainOptions options_;
    Image image_;
    std::optional<Image> condition_;
    model::ModelBundle bundle_;
    objective::Distance<float> distance_;
    std::unique_ptr<nn::Adam<float>> adam_;
    long iteration_ = 0;
    std::vector<LogEntry> log_;
    std::unique_ptr<std::ofstream> log_file_;
    std::deque<std::pair<long, std::future<warp::AugmentedSample>>> prefetch_;
};

struct TrainResult {
    model::ModelBundle bundle;
    std::vector<LogEntry> log;
};

TrainResult train(const config::TrainConfig& c, TrainOptions options = {});
// Requires conditional mode with a condition source.
TrainResult train_conditional(const config::TrainConfig& c, TrainOptions options = {});

}  // namespace sgen::trainer
