// Command-line entry point: training, the downstream tasks and SIFID.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sgen/checkpoint.hpp"
#include "sgen/config.hpp"
#include "sgen/imaging.hpp"
#include "sgen/metrics.hpp"
#include "sgen/tasks.hpp"
#include "sgen/trainer.hpp"
#include "sgen/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sgen;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string device = "cpu";
};

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path require_out(const Globals& g, const char* fallback) {
    fs::path out = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
    fs::create_directories(out);
    return out;
}

model::ModelBundle require_bundle(const Globals& g) {
    if (g.checkpoint.empty()) {
        throw UsageError("--checkpoint is required for this command");
    }
    return checkpoint::load_bundle(g.checkpoint);
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, std::uint64_t seed,
                    const json& artifacts, const json& timings) {
    json m{{"tool", "sgen"},
           {"version", kVersion},
           {"command", command},
           {"config", config},
           {"seed", seed},
           {"artifacts", artifacts},
           {"timings", timings}};
    std::ofstream(dir / "run_manifest.json") << m.dump(2) << "\n";
}

void emit(const json& summary) {
    std::cout << summary.dump(2) << std::endl;
}

Image load_training(const model::ModelBundle& bundle, const std::string& override_path) {
    if (!override_path.empty()) {
        return imaging::preshrink(imaging::load_image(override_path), bundle.pyramid().spec.max_dim);
    }
    return tasks::training_image(bundle);
}

// SIFID against the training image, with the Inception extractor when its
// weights are available and the raw-patch extractor otherwise.
json sifid_report(const Image& a, const Image& b) {
    std::unique_ptr<metrics::FeatureExtractor> ex;
    try {
        ex = metrics::load_inception();
    } catch (const objective::MissingWeightsError&) {
        ex = std::make_unique<metrics::PatchExtractor>();
    }
    return json{{"sifid", metrics::sifid(a, b, *ex)}, {"extractor_id", ex->id()}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sgen: single-image generator training and synthesis"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "training config (JSON)");
    app.add_option("--seed", g.seed, "random seed; overrides the config");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--checkpoint", g.checkpoint, "bundle checkpoint directory");
    app.add_option("--device", g.device, "compute device (only cpu is supported)");

    // train
    auto* train = app.add_subcommand("train", "train a bundle from a config file");
    std::string train_image;
    std::optional<long> train_iters;
    std::string train_loss;
    std::optional<int> train_workers;
    bool train_schema = false;
    train->add_option("--image", train_image, "override image_path");
    train->add_option("--iterations", train_iters, "override iterations");
    train->add_option("--loss-mode", train_loss, "override loss_mode (pixel|perceptual)");
    train->add_option("--workers", train_workers, "override workers");
    train->add_flag("--print-schema", train_schema, "print the config JSON schema and exit");

    // animate
    auto* animate = app.add_subcommand("animate", "render a latent-interpolation animation");
    int frames = 8;
    std::string loop = "once";
    std::string anim_image;
    bool video = false;
    animate->add_option("--frames", frames, "T; T+1 frames are rendered (2T with ping-pong)");
    animate->add_option("--loop", loop, "once or ping-pong")->check(CLI::IsMember({"once", "ping-pong"}));
    animate->add_option("--image", anim_image, "training image (default: the path recorded in the bundle)");
    animate->add_flag("--video", video, "also encode animation.mp4 with ffmpeg when available");

    // sample
    auto* sample = app.add_subcommand("sample", "synthesize a novel image by latent blending");
    int count = 1;
    double alpha = 0.5;
    std::string sample_image;
    sample->add_option("--count", count, "augmented copies concatenated horizontally");
    sample->add_option("--alpha", alpha, "blend weight between the two codes");
    sample->add_option("--image", sample_image, "training image (default: the path recorded in the bundle)");

    // paint2image / edges2image
    auto* paint = app.add_subcommand("paint2image", "map a color painting to an image");
    std::string paint_input;
    paint->add_option("--input", paint_input, "painting")->required();
    auto* edges = app.add_subcommand("edges2image", "map an edge drawing to an image");
    std::string edges_input;
    edges->add_option("--input", edges_input, "edge map")->required();

    // harmonize
    auto* harmonize = app.add_subcommand("harmonize", "harmonize a pasted object");
    std::string composite;
    std::string mask;
    std::optional<int> level;
    harmonize->add_option("--composite", composite, "composite image")->required();
    harmonize->add_option("--mask", mask, "foreground mask")->required();
    harmonize->add_option("--level", level, "injection level (default ceil(N/2))");

    // superres
    auto* superres = app.add_subcommand("superres", "upscale with the finest generator block");
    std::string sr_input;
    int steps = 1;
    superres->add_option("--input", sr_input, "image to upscale")->required();
    superres->add_option("--steps", steps, "number of 1/r upscaling steps");

    // sifid
    auto* sifid = app.add_subcommand("sifid", "single-image FID between two images");
    std::string image_a;
    std::string image_b;
    std::string extractor = "auto";
    sifid->add_option("image_a", image_a)->required();
    sifid->add_option("image_b", image_b)->required();
    sifid->add_option("--extractor", extractor, "auto, inception or patch")
        ->check(CLI::IsMember({"auto", "inception", "patch"}));

    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const auto t0 = Clock::now();
    try {
        if (g.device != "cpu") {
            throw UsageError("--device " + g.device + " is not supported; this build runs on cpu only");
        }
        if (*train) {
            if (train_schema) {
                emit(config::schema());
                return 0;
            }
            if (g.config.empty()) {
                throw UsageError("train needs --config <file.json>");
            }
            json raw;
            {
                std::ifstream in(g.config);
                if (!in) {
                    throw UsageError("cannot open config file " + g.config);
                }
                try {
                    in >> raw;
                } catch (const json::parse_error& e) {
                    throw UsageError("config file " + g.config + " is not valid JSON: " + e.what());
                }
            }
            if (!train_image.empty()) {
                raw["image_path"] = train_image;
            }
            if (train_iters) {
                raw["iterations"] = *train_iters;
            }
            if (!train_loss.empty()) {
                raw["loss_mode"] = train_loss;
            }
            if (train_workers) {
                raw["workers"] = *train_workers;
            }
            if (g.seed) {
                raw["seed"] = *g.seed;
            }
            const config::TrainConfig cfg = config::from_json(raw);
            const fs::path out = require_out(g, "run");
            trainer::TrainOptions opts;
            opts.run_dir = out;
            auto t = trainer::Trainer::from_config(cfg, opts);
            t->run();
            const double secs = seconds_since(t0);
            const auto& last = t->log().back();
            json artifacts{{"log", (out / "train_log.jsonl").string()}, {"checkpoint", (out / "final").string()}};
            write_manifest(out, "train", config::to_json(cfg), cfg.seed, artifacts, {{"train_seconds", secs}});
            emit({{"command", "train"},
                  {"run_dir", out.string()},
                  {"iterations", t->iteration()},
                  {"final", trainer::to_json(last)},
                  {"checkpoint", (out / "final").string()},
                  {"seconds", secs}});
            return 0;
        }
        if (*sifid) {
            const Image a = imaging::load_image(image_a);
            const Image b = imaging::load_image(image_b);
            std::unique_ptr<metrics::FeatureExtractor> ex;
            if (extractor == "patch") {
                ex = std::make_unique<metrics::PatchExtractor>();
            } else if (extractor == "inception") {
                ex = metrics::load_inception();
            } else {
                try {
                    ex = metrics::load_inception();
                } catch (const objective::MissingWeightsError& e) {
                    std::cerr << "warning: " << e.what() << "; using the raw-patch extractor\n";
                    ex = std::make_unique<metrics::PatchExtractor>();
                }
            }
            const json report{{"image_a", image_a},
                              {"image_b", image_b},
                              {"sifid", metrics::sifid(a, b, *ex)},
                              {"extractor_id", ex->id()}};
            if (!g.out.empty()) {
                const fs::path out = require_out(g, "sifid");
                std::ofstream(out / "sifid.json") << report.dump(2) << "\n";
                write_manifest(out, "sifid", {{"image_a", image_a}, {"image_b", image_b}, {"extractor", extractor}}, 0,
                               {{"report", (out / "sifid.json").string()}}, {{"seconds", seconds_since(t0)}});
            }
            emit(report);
            return 0;
        }

        const model::ModelBundle bundle = require_bundle(g);
        const std::uint64_t seed = g.seed.value_or(0);
        json summary;
        json artifacts;
        json cfg;
        fs::path out;
        if (*animate) {
            tasks::require_unconditional(bundle, "animate");
            out = require_out(g, "animate");
            tasks::AnimationSpec spec;
            spec.frame_count = frames;
            spec.loop = loop == "ping-pong" ? tasks::LoopMode::ping_pong : tasks::LoopMode::once;
            spec.seed_a = seed * 2 + 1;
            spec.seed_b = seed * 2 + 2;
            const auto rendered = tasks::animate(bundle, load_training(bundle, anim_image), spec);
            const auto paths = tasks::write_frames(rendered, out / "frames");
            json files = json::array();
            for (const auto& p : paths) {
                files.push_back(p.string());
            }
            artifacts["frames"] = files;
            if (video) {
                const fs::path clip = out / "animation.mp4";
                if (tasks::encode_video(out / "frames", clip)) {
                    artifacts["video"] = clip.string();
                }
            }
            cfg = {{"frames", frames}, {"loop", loop}};
            summary = {{"command", "animate"}, {"frame_count", paths.size()}, {"frames_dir", (out / "frames").string()}};
        } else if (*sample) {
            tasks::require_unconditional(bundle, "sample");
            out = require_out(g, "sample");
            tasks::NovelSpec spec;
            spec.count = count;
            spec.alpha = alpha;
            spec.seed_a = seed * 2 + 1;
            spec.seed_b = seed * 2 + 2;
            const Image img = tasks::synthesize_novel(bundle, load_training(bundle, sample_image), spec);
            imaging::save_image(img, out / "sample.png");
            artifacts["image"] = (out / "sample.png").string();
            cfg = {{"count", count}, {"alpha", alpha}};
            summary = {{"command", "sample"}, {"image", artifacts["image"]}, {"height", img.height()}, {"width", img.width()}};
        } else if (*paint) {
            tasks::require_condition(bundle, model::ConditionSource::paint_quantized, "paint2image");
            out = require_out(g, "paint2image");
            const Image img = tasks::paint2image(bundle, imaging::load_image(paint_input));
            imaging::save_image(img, out / "paint2image.png");
            artifacts["image"] = (out / "paint2image.png").string();
            cfg = {{"input", paint_input}};
            summary = {{"command", "paint2image"}, {"image", artifacts["image"]}};
            try {
                summary["sifid_vs_training"] = sifid_report(img, tasks::training_image(bundle));
            } catch (const std::exception& e) {
                summary["sifid_vs_training"] = {{"error", e.what()}};
            }
        } else if (*edges) {
            tasks::require_condition(bundle, model::ConditionSource::edge_map, "edges2image");
            out = require_out(g, "edges2image");
            const Image img = tasks::edges2image(bundle, imaging::load_image(edges_input));
            imaging::save_image(img, out / "edges2image.png");
            artifacts["image"] = (out / "edges2image.png").string();
            cfg = {{"input", edges_input}};
            summary = {{"command", "edges2image"}, {"image", artifacts["image"]}};
        } else if (*harmonize) {
            out = require_out(g, "harmonize");
            tasks::HarmonizationJob job{imaging::load_image(composite), imaging::load_image(mask), level};
            const Image img = tasks::harmonize(bundle, job);
            imaging::save_image(img, out / "harmonized.png");
            artifacts["image"] = (out / "harmonized.png").string();
            const int used = level.value_or(tasks::default_injection_level(bundle));
            cfg = {{"composite", composite}, {"mask", mask}, {"level", used}};
            summary = {{"command", "harmonize"}, {"image", artifacts["image"]}, {"injection_level", used}};
        } else if (*superres) {
            out = require_out(g, "superres");
            const Image img = tasks::super_resolve(bundle, imaging::load_image(sr_input), steps);
            imaging::save_image(img, out / "superres.png");
            artifacts["image"] = (out / "superres.png").string();
            cfg = {{"input", sr_input}, {"steps", steps}};
            summary = {{"command", "superres"}, {"image", artifacts["image"]}, {"height", img.height()}, {"width", img.width()}};
        }
        cfg["checkpoint"] = g.checkpoint;
        write_manifest(out, summary["command"].get<std::string>(), cfg, seed, artifacts,
                       {{"seconds", seconds_since(t0)}});
        summary["run_dir"] = out.string();
        emit(summary);
        return 0;
    } catch (const config::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
