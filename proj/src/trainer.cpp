#include "sgen/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "sgen/checkpoint.hpp"
#include "sgen/imaging.hpp"
#include "sgen/nn/safetensors.hpp"

namespace sgen::trainer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOptimizerFile = "optimizer.safetensors";
constexpr const char* kStateFile = "trainer_state.json";
constexpr const char* kStateFormat = "sgen-trainer";
constexpr int kStateVersion = 1;

std::string iter_dir_name(long k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "iter_%06ld", k);
    return buf;
}

model::ModelBundle initial_bundle(const config::TrainConfig& c, const Image& image) {
    const ImagePyramid pyr = imaging::build_pyramid(image, c.pyramid);
    model::PyramidInfo info{pyr.dims(), pyr.scale_factor, c.pyramid};
    model::ModelBundle b(c.mode, info, c.generator, c.encoder, c.seed);
    b.condition_source = c.condition_source;
    b.train_config = config::to_json(c);
    return b;
}

objective::Distance<float> pick_distance(const config::TrainConfig& c, const TrainOptions& o) {
    if (o.distance) {
        return *o.distance;
    }
    std::optional<fs::path> w;
    if (c.vgg_weights) {
        w = fs::path(*c.vgg_weights);
    }
    return objective::Distance<float>::make(c.loss_mode, w);
}

}  // namespace

json to_json(const LogEntry& e) {
    json j = objective::to_json(e.report);
    j["iteration"] = e.iteration;
    j["lr"] = e.lr;
    j["grad_norm"] = e.grad_norm;
    return j;
}

LogEntry log_entry_from_json(const json& j) {
    LogEntry e;
    e.iteration = j.at("iteration").get<long>();
    e.lr = j.at("lr").get<double>();
    e.grad_norm = j.at("grad_norm").get<double>();
    e.report = objective::loss_report_from_json(j);
    return e;
}

double learning_rate(const config::TrainConfig& c, long i) {
    if (c.schedule == "constant") {
        return c.lr;
    }
    return c.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(i) / static_cast<double>(c.iterations)));
}

Image prepare_image(const Image& raw, const config::TrainConfig& c) {
    return imaging::preshrink(raw, c.pyramid.max_dim);
}

Conditioning make_conditioning(const Image& image, const config::TrainConfig& c) {
    switch (c.condition_source) {
        case model::ConditionSource::paint_quantized: {
            imaging::Palette pal = imaging::fit_palette(image, c.palette_size);
            return Conditioning{imaging::apply_palette(image, pal), pal};
        }
        case model::ConditionSource::edge_map:
            return Conditioning{imaging::extract_edges(image, c.canny), std::nullopt};
        case model::ConditionSource::none:
            break;
    }
    throw model::ModeError("no condition source configured");
}

Image restore_condition(const Image& warped, model::ConditionSource source,
                        const std::optional<imaging::Palette>& palette) {
    switch (source) {
        case model::ConditionSource::paint_quantized:
            if (!palette) {
                throw model::ModeError("paint conditioning without a palette");
            }
            return imaging::apply_palette(warped, *palette);
        case model::ConditionSource::edge_map:
            return imaging::binarize(warped, objective::kEdgeCoverageThreshold);
        case model::ConditionSource::none:
            break;
    }
    return warped;
}

Trainer::Trainer(const config::TrainConfig& c, const Image& image, TrainOptions options)
    : Trainer(c, prepare_image(image, c), std::move(options), initial_bundle(c, prepare_image(image, c))) {}

Trainer::Trainer(const config::TrainConfig& c, const Image& image, TrainOptions options, model::ModelBundle bundle)
    : config_(c),
      options_(std::move(options)),
      image_(image),
      bundle_(std::move(bundle)),
      distance_(pick_distance(c, options_)) {
    config::validate(config_);
    if (config_.mode == model::Mode::conditional) {
        Conditioning cd = make_conditioning(image_, config_);
        condition_ = std::move(cd.map);
        if (!bundle_.palette) {
            bundle_.palette = std::move(cd.palette);
        }
    }
    init_optimizer();
}

Trainer::~Trainer() = default;

void Trainer::init_optimizer() {
    std::vector<std::pair<std::string, nn::Var<float>>> params;
    for (const auto& [name, v] : bundle_.state().params) {
        params.emplace_back(name, *v);
    }
    adam_ = std::make_unique<nn::Adam<float>>(std::move(params), nn::AdamOptions{config_.beta1, config_.beta2, 1e-8});
}

std::unique_ptr<Trainer> Trainer::from_config(const config::TrainConfig& c, TrainOptions options) {
    config::validate(c);
    const Image raw = imaging::load_image(c.image_path);
    return std::make_unique<Trainer>(c, raw, std::move(options));
}

std::unique_ptr<Trainer> Trainer::resume(const fs::path& dir, TrainOptions options) {
    model::ModelBundle bundle = checkpoint::load_bundle(dir);
    const config::TrainConfig c = config::from_json(bundle.train_config);
    json state;
    {
        std::ifstream in(dir / kStateFile);
        if (!in) {
            throw checkpoint::CheckpointError("no " + std::string(kStateFile) + " in " + dir.string() +
                                              "; not a trainer checkpoint");
        }
        in >> state;
    }
    if (state.value("format", "") != kStateFormat || state.value("version", 0) != kStateVersion) {
        throw checkpoint::CheckpointError("unsupported trainer state in " + dir.string());
    }
    const Image raw = imaging::load_image(c.image_path);
    std::unique_ptr<Trainer> t(new Trainer(c, prepare_image(raw, c), std::move(options), std::move(bundle)));
    const long it = state.at("iteration").get<long>();
    const auto opt = nn::safetensors::read<float>(dir / kOptimizerFile);
    t->adam_->load_state(opt, state.at("optimizer_steps").get<long long>());
    t->iteration_ = it;
    return t;
}

warp::AugmentedSample Trainer::sample_for(long i) const {
    Rng rng = Rng::stream(config_.seed, 2 * static_cast<std::uint64_t>(i));
    warp::AugmentedSample s = warp::augment_sample(image_, condition_, config_.augmentation, rng);
    if (s.condition) {
        s.condition = restore_condition(*s.condition, config_.condition_source, bundle_.palette);
    }
    return s;
}

warp::AugmentedSample Trainer::next_sample() {
    if (config_.workers <= 0) {
        return sample_for(iteration_);
    }
    long next = prefetch_.empty() ? iteration_ : prefetch_.back().first + 1;
    while (static_cast<int>(prefetch_.size()) < config_.workers && next < config_.iterations) {
        prefetch_.emplace_back(next, std::async(std::launch::async, [this, next] { return sample_for(next); }));
        ++next;
    }
    if (prefetch_.empty() || prefetch_.front().first != iteration_) {
        prefetch_.clear();
        return sample_for(iteration_);
    }
    warp::AugmentedSample s = prefetch_.front().second.get();
    prefetch_.pop_front();
    return s;
}

fs::path Trainer::write_snapshot(long i, const objective::LossReport& report, const warp::AugmentedSample& s,
                                 const std::string& reason) {
    const fs::path dir = options_.run_dir ? *options_.run_dir / "nonfinite_snapshot"
                                          : fs::temp_directory_path() / ("sgen_nonfinite_" + std::to_string(config_.seed) +
                                                                         "_" + std::to_string(i));
    try {
        checkpoint::save_bundle(bundle_, dir);
        json info{{"iteration", i},
                  {"reason", reason},
                  {"report", objective::to_json(report)},
                  {"warp_record", warp::to_json(s.record)},
                  {"lr", learning_rate(config_, i)}};
        std::ofstream(dir / "diagnostic.json") << info.dump(2) << "\n";
        imaging::save_image(s.image, dir / "sample.png");
    } catch (const std::exception&) {
        return {};
    }
    return dir;
}

const LogEntry& Trainer::step() {
    if (done()) {
        throw std::logic_error("training already finished (" + std::to_string(iteration_) + " iterations)");
    }
    const long i = iteration_;
    const warp::AugmentedSample sample = next_sample();
    Rng noise = Rng::stream(config_.seed, 2 * static_cast<std::uint64_t>(i) + 1);

    objective::TotalLossOptions opts;
    opts.alpha = config_.alpha;
    opts.noise_sigma = config_.noise_sigma;
    opts.feed_decoded = config_.feed_decoded;
    opts.phase = nn::Phase::train;

    adam_->zero_grad();
    objective::LossGraph<float> g = objective::total_loss_graph(bundle_, sample, distance_, opts, noise);
    if (!std::isfinite(g.report.total)) {
        const fs::path snap = write_snapshot(i, g.report, sample, "non-finite loss");
        throw NonFiniteLossError("non-finite loss at iteration " + std::to_string(i) + "; snapshot in " + snap.string(),
                                 snap);
    }
    g.total.backward();
    const double norm = adam_->clip_grad_norm(config_.grad_clip);
    if (!std::isfinite(norm)) {
        const fs::path snap = write_snapshot(i, g.report, sample, "non-finite gradient");
        throw NonFiniteLossError("non-finite gradient at iteration " + std::to_string(i) + "; snapshot in " +
                                     snap.string(),
                                 snap);
    }
    const double lr = learning_rate(config_, i);
    adam_->step(lr);

    log_.push_back(LogEntry{i, lr, norm, std::move(g.report)});
    ++iteration_;
    if (options_.run_dir) {
        if (!log_file_) {
            fs::create_directories(*options_.run_dir);
            const auto mode = i == 0 ? std::ios::trunc : std::ios::app;
            log_file_ = std::make_unique<std::ofstream>(*options_.run_dir / "train_log.jsonl", std::ios::out | mode);
        }
        *log_file_ << to_json(log_.back()).dump() << "\n";
        log_file_->flush();
        if (config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0 && !done()) {
            save_checkpoint(*options_.run_dir / "checkpoints" / iter_dir_name(iteration_));
        }
    }
    return log_.back();
}

void Trainer::run(std::optional<long> until) {
    const long target = std::min(until.value_or(config_.iterations), config_.iterations);
    while (iteration_ < target) {
        step();
    }
    if (options_.run_dir && done()) {
        save_checkpoint(*options_.run_dir / "final");
    }
}

void Trainer::save_checkpoint(const fs::path& dir) const {
    checkpoint::save_bundle(bundle_, dir);
    nn::safetensors::write(dir / kOptimizerFile, adam_->state(), json{{"steps", adam_->steps()}});
    json state{{"format", kStateFormat},
               {"version", kStateVersion},
               {"iteration", iteration_},
               {"optimizer_steps", adam_->steps()}};
    std::ofstream out(dir / kStateFile);
    out << state.dump(2) << "\n";
    if (!out) {
        throw checkpoint::CheckpointError("failed to write " + (dir / kStateFile).string());
    }
}

TrainResult train(const config::TrainConfig& c, TrainOptions options) {
    auto t = Trainer::from_config(c, std::move(options));
    t->run();
    return TrainResult{std::move(t->mutable_bundle()), t->log()};
}

TrainResult train_conditional(const config::TrainConfig& c, TrainOptions options) {
    if (c.mode != model::Mode::conditional || c.condition_source == model::ConditionSource::none) {
        throw model::ModeError("train_conditional needs mode=conditional and a condition_source");
    }
    return train(c, std::move(options));
}

}  // namespace sgen::trainer
