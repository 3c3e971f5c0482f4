#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sgen/image.hpp"
#include "sgen/model.hpp"
#include "sgen/warp.hpp"

namespace sgen::tasks {

// Throws model::ModeError naming the required mode when the bundle does not
// match.
void require_unconditional(const model::ModelBundle& bundle, const std::string& op);
void require_condition(const model::ModelBundle& bundle, model::ConditionSource source, const std::string& op);

// Training image as the bundle saw it (config image_path, pre-shrunk).
Image training_image(const model::ModelBundle& bundle);

// alpha * z1 + (1 - alpha) * z2.
model::LatentCode blend(const model::LatentCode& z1, const model::LatentCode& z2, double alpha);

// Decode (no noise) and upscale through G; returns the finest level.
Image generate_from_code(const model::ModelBundle& bundle, const model::LatentCode& z);
// Encode x0 (coarsest dims), then generate_from_code.
Image generate(const model::ModelBundle& bundle, const Image& x0);

Image interpolate(const model::ModelBundle& bundle, const Image& x1, const Image& x2, double alpha);

enum class LoopMode { once, ping_pong };

struct AnimationSpec {
    int frame_count = 8;  // T; frames at alpha = i / T
    std::uint64_t seed_a = 1;
    std::uint64_t seed_b = 2;
    LoopMode loop = LoopMode::once;
    warp::AugmentationSpec augmentation;
};

// The two augmented endpoints, resampled to the coarsest dims.
std::pair<Image, Image> animation_endpoints(const model::ModelBundle& bundle, const Image& training,
                                            const AnimationSpec& spec);
// T + 1 frames (once) or 2T frames (ping-pong, the reversed interior is
// appended). Frame 0 is the seed_a endpoint.
std::vector<Image> animate(const model::ModelBundle& bundle, const Image& training, const AnimationSpec& spec);

// Writes frame_0000.png, frame_0001.png, ... and returns the paths.
std::vector<std::filesystem::path> write_frames(const std::vector<Image>& frames, const std::filesystem::path& dir);
// Encodes the frames with ffmpeg when it is on PATH. Returns false (after a
// warning on stderr) when the encoder is unavailable or fails.
bool encode_video(const std::filesystem::path& frame_dir, const std::filesystem::path& out, int fps = 12);

struct NovelSpec {
    int count = 2;
    std::uint64_t seed_a = 1;
    std::uint64_t seed_b = 2;
    double alpha = 0.5;
    warp::AugmentationSpec augmentation;
};

// Level dims with every width multiplied by `count`.
std::vector<Dims> widened_dims(const std::vector<Dims>& dims, int count);
Image synthesize_novel(const model::ModelBundle& bundle, const Image& training, const NovelSpec& spec);

Image paint2image(const model::ModelBundle& bundle, const Image& paint);
// Non-binary edge maps are binarized at 0 with a warning on stderr.
Image edges2image(const model::ModelBundle& bundle, const Image& edges);

inline constexpr int kFeatherRadius = 5;

struct HarmonizationJob {
    Image composite;
    Image mask;  // foreground where any channel > 0
    std::optional<int> injection_level;
};

int default_injection_level(const model::ModelBundle& bundle);
// Blend weight per pixel: 1 inside the mask, 1 - d / radius at distance d
// outside, 0 from `radius` on.
std::vector<float> feather_weights(const Image& mask, int radius = kFeatherRadius);
Image harmonize(const model::ModelBundle& bundle, const HarmonizationJob& job);

inline constexpr long long kMaxSuperResPixels = 4096LL * 4096LL;

Dims super_resolve_dims(Dims input, double scale_factor, int steps);
Image super_resolve(const model::ModelBundle& bundle, const Image& img, int steps,
                    long long max_pixels = kMaxSuperResPixels);

}  // namespace sgen::tasks
