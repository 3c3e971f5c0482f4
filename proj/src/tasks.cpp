#include "sgen/tasks.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <stdexcept>

#include "sgen/imaging.hpp"
#include "sgen/objective.hpp"

namespace sgen::tasks {

namespace fs = std::filesystem;

void require_unconditional(const model::ModelBundle& bundle, const std::string& op) {
    if (bundle.mode() != model::Mode::unconditional || !bundle.has_vae()) {
        throw model::ModeError(op + " requires an unconditional bundle (mode=unconditional, with encoder/decoder); "
                                    "this bundle is " +
                               model::to_string(bundle.mode()));
    }
}

void require_condition(const model::ModelBundle& bundle, model::ConditionSource source, const std::string& op) {
    if (bundle.mode() != model::Mode::conditional || bundle.condition_source != source) {
        throw model::ModeError(op + " requires a conditional bundle trained with condition_source=" +
                               model::to_string(source) + "; this bundle is " + model::to_string(bundle.mode()) +
                               " with condition_source=" + model::to_string(bundle.condition_source));
    }
}

Image training_image(const model::ModelBundle& bundle) {
    const auto& tc = bundle.train_config;
    if (!tc.contains("image_path")) {
        throw std::runtime_error("bundle has no recorded image_path; pass the training image explicitly");
    }
    const Image raw = imaging::load_image(tc.at("image_path").get<std::string>());
    const Image img = imaging::preshrink(raw, bundle.pyramid().spec.max_dim);
    if (img.dims() != bundle.finest_dims()) {
        throw std::runtime_error("recorded training image no longer matches the bundle's finest dims");
    }
    return img;
}

model::LatentCode blend(const model::LatentCode& z1, const model::LatentCode& z2, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("alpha must lie in [0, 1]");
    }
    if (z1.values.shape() != z2.values.shape()) {
        throw std::invalid_argument("latent codes differ in shape: " + nn::shape_str(z1.values.shape()) + " vs " +
                                    nn::shape_str(z2.values.shape()));
    }
    const float a = static_cast<float>(alpha);
    const float b = static_cast<float>(1.0 - alpha);
    model::LatentCode out{z1.values};
    for (std::size_t i = 0; i < out.values.numel(); ++i) {
        out.values[i] = a * z1.values[i] + b * z2.values[i];
    }
    return out;
}

namespace {

void check_coarse(const model::ModelBundle& bundle, const Image& x, const char* name) {
    if (x.dims() != bundle.coarsest_dims()) {
        throw std::invalid_argument(std::string(name) + " must have the coarsest dims " +
                                    std::to_string(bundle.coarsest_dims().height) + "x" +
                                    std::to_string(bundle.coarsest_dims().width));
    }
}

Image finest_of(const model::ModelBundle& bundle, const Image& x0) {
    const auto levels = model::generator_forward(bundle.generator, x0);
    return levels.empty() ? x0 : levels.back();
}

}  // namespace

Image generate_from_code(const model::ModelBundle& bundle, const model::LatentCode& z) {
    require_unconditional(bundle, "generation");
    Rng unused(0);
    return finest_of(bundle, model::decode(*bundle.decoder, z, bundle.coarsest_dims(), 0.0, unused));
}

Image generate(const model::ModelBundle& bundle, const Image& x0) {
    require_unconditional(bundle, "generation");
    check_coarse(bundle, x0, "input");
    return generate_from_code(bundle, model::encode(*bundle.encoder, x0));
}

Image interpolate(const model::ModelBundle& bundle, const Image& x1, const Image& x2, double alpha) {
    require_unconditional(bundle, "interpolate");
    check_coarse(bundle, x1, "x1");
    check_coarse(bundle, x2, "x2");
    const auto z1 = model::encode(*bundle.encoder, x1);
    const auto z2 = model::encode(*bundle.encoder, x2);
    return generate_from_code(bundle, blend(z1, z2, alpha));
}

std::pair<Image, Image> animation_endpoints(const model::ModelBundle& bundle, const Image& training,
                                            const AnimationSpec& spec) {
    auto endpoint = [&](std::uint64_t seed) {
        Rng rng(seed);
        const auto s = warp::augment_sample(training, std::nullopt, spec.augmentation, rng);
        return imaging::resample(s.image, bundle.coarsest_dims());
    };
    return {endpoint(spec.seed_a), endpoint(spec.seed_b)};
}

std::vector<Image> animate(const model::ModelBundle& bundle, const Image& training, const AnimationSpec& spec) {
    require_unconditional(bundle, "animate");
    if (spec.frame_count < 2) {
        throw std::invalid_argument("animation needs frame_count >= 2");
    }
    const auto [xa, xb] = animation_endpoints(bundle, training, spec);
    const auto za = model::encode(*bundle.encoder, xa);
    const auto zb = model::encode(*bundle.encoder, xb);
    const int t = spec.frame_count;
    std::vector<Image> frames;
    for (int i = 0; i <= t; ++i) {
        frames.push_back(generate_from_code(bundle, blend(zb, za, static_cast<double>(i) / t)));
    }
    if (spec.loop == LoopMode::ping_pong) {
        for (int i = t - 1; i >= 1; --i) {
            frames.push_back(frames[static_cast<std::size_t>(i)]);
        }
    }
    return frames;
}

std::vector<fs::path> write_frames(const std::vector<Image>& frames, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<fs::path> paths;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", i);
        paths.push_back(dir / name);
        imaging::save_image(frames[i], paths.back());
    }
    return paths;
}

bool encode_video(const fs::path& frame_dir, const fs::path& out, int fps) {
    if (std::system("command -v ffmpeg >/dev/null 2>&1") != 0) {
        std::cerr << "warning: ffmpeg not found on PATH; skipping video encoding (frames are in " << frame_dir.string()
                  << ")\n";
        return false;
    }
    const std::string cmd = "ffmpeg -y -loglevel error -framerate " + std::to_string(fps) + " -i '" +
                            (frame_dir / "frame_%04d.png").string() + "' -pix_fmt yuv420p '" + out.string() + "'";
    if (std::system(cmd.c_str()) != 0) {
        std::cerr << "warning: ffmpeg failed; frames are in " << frame_dir.string() << "\n";
        return false;
    }
    return true;
}

std::vector<Dims> widened_dims(const std::vector<Dims>& dims, int count) {
    std::vector<Dims> out;
    for (const auto& d : dims) {
        out.push_back(Dims{d.height, d.width * count});
    }
    return out;
}

Image synthesize_novel(const model::ModelBundle& bundle, const Image& training, const NovelSpec& spec) {
    require_unconditional(bundle, "synthesize_novel");
    if (spec.count < 1) {
        throw std::invalid_argument("novel synthesis needs count >= 1");
    }
    const auto dims = widened_dims(bundle.pyramid().level_dims, spec.count);
    auto canvas = [&](std::uint64_t seed) {
        std::vector<Image> parts;
        for (int k = 0; k < spec.count; ++k) {
            Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
            parts.push_back(warp::augment_sample(training, std::nullopt, spec.augmentation, rng).image);
        }
        return imaging::resample(imaging::hconcat(parts), dims.front());
    };
    const auto za = model::encode(*bundle.encoder, canvas(spec.seed_a));
    const auto zb = model::encode(*bundle.encoder, canvas(spec.seed_b));
    const auto z = blend(za, zb, spec.alpha);
    Rng unused(0);
    const Image x0 = model::decode(*bundle.decoder, z, dims.front(), 0.0, unused);
    nn::NoGradGuard guard;
    const auto outs = bundle.generator.forward_dims(nn::Var<float>(nn::from_image<float>(x0)), dims);
    return outs.empty() ? x0 : nn::to_image(outs.back().value());
}

Image paint2image(const model::ModelBundle& bundle, const Image& paint) {
    require_condition(bundle, model::ConditionSource::paint_quantized, "paint2image");
    return finest_of(bundle, objective::coarse_condition(bundle, paint));
}

Image edges2image(const model::ModelBundle& bundle, const Image& edges) {
    require_condition(bundle, model::ConditionSource::edge_map, "edges2image");
    Image e = edges;
    if (!imaging::is_binary(e)) {
        std::cerr << "warning: edge map is not binary; thresholding at 0\n";
        e = imaging::binarize(e, 0.0f);
    }
    return finest_of(bundle, objective::coarse_condition(bundle, e));
}

int default_injection_level(const model::ModelBundle& bundle) {
    const int n = bundle.generator.num_blocks();
    return (n + 1) / 2;
}

std::vector<float> feather_weights(const Image& mask, int radius) {
    const int h = mask.height();
    const int w = mask.width();
    std::vector<char> inside(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            inside[static_cast<std::size_t>(y) * w + x] =
                mask.at(0, y, x) > 0.0f || mask.at(1, y, x) > 0.0f || mask.at(2, y, x) > 0.0f;
        }
    }
    std::vector<float> weights(inside.size(), 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (inside[i]) {
                weights[i] = 1.0f;
                continue;
            }
            double best = INFINITY;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int yy = y + dy;
                    const int xx = x + dx;
                    if (yy >= 0 && yy < h && xx >= 0 && xx < w && inside[static_cast<std::size_t>(yy) * w + xx]) {
                        best = std::min(best, std::hypot(static_cast<double>(dx), static_cast<double>(dy)));
                    }
                }
            }
            if (best < radius) {
                weights[i] = static_cast<float>(1.0 - best / radius);
            }
        }
    }
    return weights;
}

Image harmonize(const model::ModelBundle& bundle, const HarmonizationJob& job) {
    if (job.mask.dims() != job.composite.dims()) {
        throw std::invalid_argument("mask dims " + std::to_string(job.mask.height()) + "x" +
                                    std::to_string(job.mask.width()) + " differ from composite dims " +
                                    std::to_string(job.composite.height()) + "x" +
                                    std::to_string(job.composite.width()));
    }
    if (job.composite.dims() != bundle.finest_dims()) {
        throw std::invalid_argument("composite must have the training image dims " +
                                    std::to_string(bundle.finest_dims().height) + "x" +
                                    std::to_string(bundle.finest_dims().width));
    }
    const int blocks = bundle.generator.num_blocks();
    const int level = job.injection_level.value_or(default_injection_level(bundle));
    if (level < 0 || level >= blocks) {
        throw std::out_of_range("injection level " + std::to_string(level) + " outside [0, " +
                                std::to_string(blocks - 1) + "]");
    }
    const Dims d = bundle.pyramid().level_dims[static_cast<std::size_t>(level)];
    const Image generated = model::inject_at_scale(bundle.generator, imaging::resample(job.composite, d), level).back();
    const auto weights = feather_weights(job.mask);
    Image out = job.composite;
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            const float wgt = weights[static_cast<std::size_t>(y) * out.width() + x];
            if (wgt <= 0.0f) {
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                out.set(c, y, x, wgt * generated.at(c, y, x) + (1.0f - wgt) * job.composite.at(c, y, x));
            }
        }
    }
    return out;
}

Dims super_resolve_dims(Dims input, double scale_factor, int steps) {
    if (!(scale_factor > 0.0 && scale_factor < 1.0)) {
        throw std::invalid_argument("scale factor must lie in (0, 1)");
    }
    const double f = std::pow(1.0 / scale_factor, steps);
    auto up = [&](int v) { return static_cast<int>(std::ceil(v * f - 1e-9)); };
    return Dims{up(input.height), up(input.width)};
}

Image super_resolve(const model::ModelBundle& bundle, const Image& img, int steps, long long max_pixels) {
    if (steps < 1) {
        throw std::invalid_argument("super_resolve needs steps >= 1");
    }
    const int blocks = bundle.generator.num_blocks();
    if (blocks < 1) {
        throw model::ModeError("super_resolve needs a generator with at least one block");
    }
    const double r = bundle.pyramid().scale_factor;
    const Dims final_dims = super_resolve_dims(img.dims(), r, steps);
    if (static_cast<long long>(final_dims.height) * final_dims.width > max_pixels) {
        throw std::invalid_argument("super-resolved output " + std::to_string(final_dims.height) + "x" +
                                    std::to_string(final_dims.width) + " exceeds the " + std::to_string(max_pixels) +
                                    "-pixel cap");
    }
    nn::NoGradGuard guard;
    nn::Var<float> x(nn::from_image<float>(img));
    for (int k = 1; k <= steps; ++k) {
        x = bundle.generator.apply_block(blocks, x, super_resolve_dims(img.dims(), r, k));
    }
    return nn::to_image(x.value());
}

}  // namespace sgen::tasks
