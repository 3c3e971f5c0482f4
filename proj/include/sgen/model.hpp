#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgen/image.hpp"
#include "sgen/imaging.hpp"
#include "sgen/nn/layers.hpp"
#include "sgen/rng.hpp"

namespace sgen::model {

using nn::Phase;
using nn::StateRefs;
using nn::Var;

struct GeneratorConfig {
    int channels = 32;
    int layers = 5;  // conv layers per block, the last one projects back to RGB
    int kernel = 3;
};

struct EncoderConfig {
    std::vector<int> channels{32, 64, 128};
};

// One upscaling block: conv-BN-ReLU layers followed by a projection to RGB
// and a tanh, all with reflection padding so spatial dims are preserved.
template <typename T>
class GeneratorBlock {
  public:
    GeneratorBlock(const GeneratorConfig& config, Rng& rng);

    Var<T> residual(const Var<T>& upscaled, Phase phase);
    Var<T> residual(const Var<T>& upscaled) const;
    void collect(StateRefs<T>& refs, const std::string& prefix);

    std::vector<nn::Conv2d<T>> convs;
    std::vector<nn::BatchNorm2d<T>> norms;

  private:
    template <typename Self>
    static Var<T> run(Self& self, const Var<T>& upscaled, Phase phase);
};

// Block n (1..N) lifts level n-1 to level n dims bicubically and adds the
// block's residual.
template <typename T>
class UpscalingGenerator {
  public:
    UpscalingGenerator(std::vector<Dims> level_dims, const GeneratorConfig& config, Rng& rng);

    const std::vector<Dims>& level_dims() const { return level_dims_; }
    int num_blocks() const { return static_cast<int>(blocks.size()); }
    const GeneratorConfig& config() const { return config_; }

    // Outputs for levels 1..N from a level-0 input.
    std::vector<Var<T>> forward(const Var<T>& x0, Phase phase);
    std::vector<Var<T>> forward(const Var<T>& x0) const;
    // Outputs for levels n+1..N from an input at level-n dims.
    std::vector<Var<T>> forward_from(const Var<T>& x, int level, Phase phase);
    std::vector<Var<T>> forward_from(const Var<T>& x, int level) const;
    // Runs blocks 1..N against an arbitrary dims schedule (dims[0] must be
    // the input's dims, dims.size() == N + 1). Used for wide canvases.
    std::vector<Var<T>> forward_dims(const Var<T>& x0, const std::vector<Dims>& dims) const;

    // Block `block` (1..N) applied to x, lifting it to `target` dims.
    Var<T> apply_block(int block, const Var<T>& x, Dims target) const;

    void collect(StateRefs<T>& refs, const std::string& prefix);

    std::vector<GeneratorBlock<T>> blocks;

  private:
    void check_input(const Var<T>& x, int level) const;

    std::vector<Dims> level_dims_;
    GeneratorConfig config_;
};

// Spatial dims after the encoder's stride-2 stages.
Dims latent_dims(Dims input, int stages = 3);

template <typename T>
class Encoder {
  public:
    Encoder(const EncoderConfig& config, Rng& rng);

    Var<T> forward(const Var<T>& x, Phase phase);
    Var<T> forward(const Var<T>& x) const;
    int latent_channels() const { return config_.channels.back(); }
    void collect(StateRefs<T>& refs, const std::string& prefix);

    std::vector<nn::Conv2d<T>> convs;
    std::vector<nn::BatchNorm2d<T>> norms;

  private:
    template <typename Self>
    static Var<T> run(Self& self, const Var<T>& x, Phase phase);
    EncoderConfig config_;
};

// Mirror of the encoder with transposed convolutions; the result is resized
// to `output` dims and squashed by tanh.
template <typename T>
class Decoder {
  public:
    Decoder(const EncoderConfig& config, Rng& rng);

    Var<T> forward(const Var<T>& z, Dims output, Phase phase);
    Var<T> forward(const Var<T>& z, Dims output) const;
    void collect(StateRefs<T>& refs, const std::string& prefix);

    std::vector<nn::ConvTranspose2d<T>> deconvs;
    std::vector<nn::BatchNorm2d<T>> norms;

  private:
    template <typename Self>
    static Var<T> run(Self& self, const Var<T>& z, Dims output, Phase phase);
};

// Grid of latent values, [channels, h, w].
struct LatentCode {
    nn::Tensor<float> values;

    int channels() const { return values.dim(0); }
    int height() const { return values.dim(1); }
    int width() const { return values.dim(2); }
};

enum class Mode { unconditional, conditional };
enum class ConditionSource { none, paint_quantized, edge_map };

std::string to_string(Mode m);
std::string to_string(ConditionSource c);
Mode mode_from_string(const std::string& s);
ConditionSource condition_source_from_string(const std::string& s);

class ModeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct PyramidInfo {
    std::vector<Dims> level_dims;
    double scale_factor = 0.75;  // effective ratio between neighbouring levels
    imaging::PyramidSpec spec;
};

template <typename T>
class BasicModelBundle {
  public:
    BasicModelBundle(Mode mode, PyramidInfo pyramid, GeneratorConfig gen_config, EncoderConfig enc_config,
                     std::uint64_t seed);
    BasicModelBundle(BasicModelBundle&&) noexcept = default;
    BasicModelBundle& operator=(BasicModelBundle&&) noexcept = default;
    // Parameters are shared handles; copies go through clone()/cast().
    BasicModelBundle(const BasicModelBundle&) = delete;
    BasicModelBundle& operator=(const BasicModelBundle&) = delete;

    Mode mode() const { return mode_; }
    bool has_vae() const { return encoder.has_value(); }
    const PyramidInfo& pyramid() const { return pyramid_; }
    const GeneratorConfig& generator_config() const { return gen_config_; }
    const EncoderConfig& encoder_config() const { return enc_config_; }
    Dims coarsest_dims() const { return pyramid_.level_dims.front(); }
    Dims finest_dims() const { return pyramid_.level_dims.back(); }
    Dims latent_spatial_dims() const { return latent_dims(coarsest_dims()); }

    // Names are prefixed "generator.", "encoder.", "decoder.".
    StateRefs<T> state();
    StateRefs<T> generator_state();
    StateRefs<T> vae_state();

    template <typename U>
    BasicModelBundle<U> cast() const;
    BasicModelBundle clone() const { return cast<T>(); }

    UpscalingGenerator<T> generator;
    std::optional<Encoder<T>> encoder;
    std::optional<Decoder<T>> decoder;

    ConditionSource condition_source = ConditionSource::none;
    std::optional<imaging::Palette> palette;  // paint-conditioned bundles
    nlohmann::json train_config = nlohmann::json::object();

  private:
    Mode mode_;
    PyramidInfo pyramid_;
    GeneratorConfig gen_config_;
    EncoderConfig enc_config_;
};

using ModelBundle = BasicModelBundle<float>;

// Image-level entry points (eval phase, no graph recording).

// Levels 1..N for a level-0 input.
std::vector<Image> generator_forward(const UpscalingGenerator<float>& g, const Image& x0);
// Levels n+1..N from an image at level-n dims.
std::vector<Image> inject_at_scale(const UpscalingGenerator<float>& g, const Image& img, int level);
LatentCode encode(const Encoder<float>& e, const Image& x0);
// Adds N(0, noise_sigma^2) per element before decoding.
Image decode(const Decoder<float>& d, const LatentCode& z, Dims output, double noise_sigma, Rng& rng);

inline constexpr double kDefaultNoiseSigma = 0.01;

}  // namespace sgen::model
