#include "sgen/model.hpp"

#include <stdexcept>
#include <type_traits>

namespace sgen::model {

namespace {

template <typename BN, typename T>
Var<T> bn_apply(BN& bn, const Var<T>& x, Phase phase) {
    if constexpr (std::is_const_v<BN>) {
        return bn.forward(x);
    } else {
        return bn.forward(x, phase);
    }
}

std::string dims_str(Dims d) {
    return std::to_string(d.height) + "x" + std::to_string(d.width);
}

Dims var_dims(const std::vector<int>& shape) {
    return Dims{shape.at(1), shape.at(2)};
}

}  // namespace

template <typename T>
GeneratorBlock<T>::GeneratorBlock(const GeneratorConfig& config, Rng& rng) {
    if (config.layers < 2 || config.channels < 1 || config.kernel < 1 || config.kernel % 2 == 0) {
        throw std::invalid_argument("generator block needs >= 2 layers, >= 1 channel and an odd kernel");
    }
    const int pad = config.kernel / 2;
    int in = 3;
    for (int i = 0; i + 1 < config.layers; ++i) {
        convs.emplace_back(in, config.channels, config.kernel, 1, pad, nn::PadMode::reflect, false, rng);
        norms.emplace_back(config.channels, rng);
        in = config.channels;
    }
    convs.emplace_back(in, 3, config.kernel, 1, pad, nn::PadMode::reflect, true, rng);
}

template <typename T>
template <typename Self>
Var<T> GeneratorBlock<T>::run(Self& self, const Var<T>& upscaled, Phase phase) {
    Var<T> h = upscaled;
    for (std::size_t i = 0; i < self.norms.size(); ++i) {
        h = nn::relu(bn_apply(self.norms[i], self.convs[i].forward(h), phase));
    }
    return nn::tanh(self.convs.back().forward(h));
}

template <typename T>
Var<T> GeneratorBlock<T>::residual(const Var<T>& upscaled, Phase phase) {
    return run(*this, upscaled, phase);
}

template <typename T>
Var<T> GeneratorBlock<T>::residual(const Var<T>& upscaled) const {
    return run(*this, upscaled, Phase::eval);
}

template <typename T>
void GeneratorBlock<T>::collect(StateRefs<T>& refs, const std::string& prefix) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
        convs[i].collect(refs, prefix + "conv" + std::to_string(i) + ".");
        if (i < norms.size()) {
            norms[i].collect(refs, prefix + "bn" + std::to_string(i) + ".");
        }
    }
}

template <typename T>
UpscalingGenerator<T>::UpscalingGenerator(std::vector<Dims> level_dims, const GeneratorConfig& config, Rng& rng)
    : level_dims_(std::move(level_dims)), config_(config) {
    if (level_dims_.empty()) {
        throw std::invalid_argument("generator needs at least one pyramid level");
    }
    for (std::size_t n = 1; n < level_dims_.size(); ++n) {
        blocks.emplace_back(config_, rng);
    }
}

template <typename T>
void UpscalingGenerator<T>::check_input(const Var<T>& x, int level) const {
    const int last = std::max(0, num_blocks() - 1);
    if (level < 0 || level > last) {
        throw std::out_of_range("injection level " + std::to_string(level) + " outside [0, " + std::to_string(last) +
                                "]");
    }
    const auto& s = x.shape();
    const Dims want = level_dims_[static_cast<std::size_t>(level)];
    if (s.size() != 3 || s[0] != 3 || s[1] != want.height || s[2] != want.width) {
        throw std::invalid_argument("generator input " + nn::shape_str(s) + " does not match level " +
                                    std::to_string(level) + " dims " + dims_str(want));
    }
}

namespace {

template <typename T, typename Blocks>
std::vector<Var<T>> run_chain(Blocks& blocks, Var<T> x, int from, const std::vector<Dims>& dims, Phase phase) {
    std::vector<Var<T>> out;
    for (std::size_t n = static_cast<std::size_t>(from) + 1; n < dims.size(); ++n) {
        Var<T> up = nn::resize_bicubic(x, dims[n]);
        Var<T> res;
        if constexpr (std::is_const_v<Blocks>) {
            res = blocks[n - 1].residual(up);
        } else {
            res = blocks[n - 1].residual(up, phase);
        }
        x = nn::add(up, res);
        out.push_back(x);
    }
    return out;
}

}  // namespace

template <typename T>
std::vector<Var<T>> UpscalingGenerator<T>::forward(const Var<T>& x0, Phase phase) {
    return forward_from(x0, 0, phase);
}

template <typename T>
std::vector<Var<T>> UpscalingGenerator<T>::forward(const Var<T>& x0) const {
    return forward_from(x0, 0);
}

template <typename T>
std::vector<Var<T>> UpscalingGenerator<T>::forward_from(const Var<T>& x, int level, Phase phase) {
    check_input(x, level);
    return run_chain<T>(blocks, x, level, level_dims_, phase);
}

template <typename T>
std::vector<Var<T>> UpscalingGenerator<T>::forward_from(const Var<T>& x, int level) const {
    check_input(x, level);
    return run_chain<T>(blocks, x, level, level_dims_, Phase::eval);
}

template <typename T>
std::vector<Var<T>> UpscalingGenerator<T>::forward_dims(const Var<T>& x0, const std::vector<Dims>& dims) const {
    if (dims.size() != level_dims_.size()) {
        throw std::invalid_argument("dims schedule has " + std::to_string(dims.size()) + " entries, generator expects " +
                                    std::to_string(level_dims_.size()));
    }
    const Dims in = var_dims(x0.shape());
    if (in.height != dims[0].height || in.width != dims[0].width) {
        throw std::invalid_argument("input dims " + dims_str(in) + " do not match schedule start " + dims_str(dims[0]));
    }
    return run_chain<T>(blocks, x0, 0, dims, Phase::eval);
}

template <typename T>
Var<T> UpscalingGenerator<T>::apply_block(int block, const Var<T>& x, Dims target) const {
    if (block < 1 || block > num_blocks()) {
        throw std::out_of_range("block index " + std::to_string(block) + " outside [1, " + std::to_string(num_blocks()) +
                                "]");
    }
    Var<T> up = nn::resize_bicubic(x, target);
    return nn::add(up, blocks[static_cast<std::size_t>(block - 1)].residual(up));
}

template <typename T>
void UpscalingGenerator<T>::collect(StateRefs<T>& refs, const std::string& prefix) {
    for (std::size_t n = 0; n < blocks.size(); ++n) {
        blocks[n].collect(refs, prefix + "block" + std::to_string(n + 1) + ".");
    }
}

Dims latent_dims(Dims input, int stages) {
    Dims d = input;
    for (int i = 0; i < stages; ++i) {
        if (d.height < 2 || d.width < 2) {
            throw std::invalid_argument("input " + dims_str(input) + " too small for " + std::to_string(stages) +
                                        " encoder stages");
        }
        d = Dims{(d.height - 2) / 2 + 1, (d.width - 2) / 2 + 1};
    }
    return d;
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
    if (config_.channels.empty()) {
        throw std::invalid_argument("encoder needs at least one stage");
    }
    int in = 3;
    for (int c : config_.channels) {
        convs.emplace_back(in, c, 4, 2, 1, nn::PadMode::zeros, false, rng);
        norms.emplace_back(c, rng);
        in = c;
    }
}

template <typename T>
template <typename Self>
Var<T> Encoder<T>::run(Self& self, const Var<T>& x, Phase phase) {
    const auto& s = x.shape();
    if (s.size() != 3 || s[0] != 3) {
        throw std::invalid_argument("encoder expects a [3,H,W] input, got " + nn::shape_str(s));
    }
    latent_dims(var_dims(s), static_cast<int>(self.convs.size()));
    Var<T> h = x;
    for (std::size_t i = 0; i < self.convs.size(); ++i) {
        h = nn::leaky_relu(bn_apply(self.norms[i], self.convs[i].forward(h), phase), T(0.2));
    }
    return h;
}

template <typename T>
Var<T> Encoder<T>::forward(const Var<T>& x, Phase phase) {
    return run(*this, x, phase);
}

template <typename T>
Var<T> Encoder<T>::forward(const Var<T>& x) const {
    return run(*this, x, Phase::eval);
}

template <typename T>
void Encoder<T>::collect(StateRefs<T>& refs, const std::string& prefix) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
        convs[i].collect(refs, prefix + "conv" + std::to_string(i) + ".");
        norms[i].collect(refs, prefix + "bn" + std::to_string(i) + ".");
    }
}

template <typename T>
Decoder<T>::Decoder(const EncoderConfig& config, Rng& rng) {
    const auto& ch = config.channels;
    if (ch.empty()) {
        throw std::invalid_argument("decoder needs at least one stage");
    }
    for (std::size_t i = ch.size(); i-- > 0;) {
        const int in = ch[i];
        const bool last = i == 0;
        const int out = last ? 3 : ch[i - 1];
        deconvs.emplace_back(in, out, 4, 2, 1, last, rng);
        if (!last) {
            norms.emplace_back(out, rng);
        }
    }
}

template <typename T>
template <typename Self>
Var<T> Decoder<T>::run(Self& self, const Var<T>& z, Dims output, Phase phase) {
    const auto& s = z.shape();
    const int expect = self.deconvs.front().weight.shape()[0];
    if (s.size() != 3 || s[0] != expect) {
        throw std::invalid_argument("decoder expects a [" + std::to_string(expect) + ",h,w] code, got " +
                                    nn::shape_str(s));
    }
    if (output.height < 1 || output.width < 1) {
        throw std::invalid_argument("decoder output dims must be positive");
    }
    Var<T> h = z;
    for (std::size_t i = 0; i < self.deconvs.size(); ++i) {
        h = self.deconvs[i].forward(h);
        if (i < self.norms.size()) {
            h = nn::relu(bn_apply(self.norms[i], h, phase));
        }
    }
    return nn::tanh(nn::resize_bicubic(h, output));
}

template <typename T>
Var<T> Decoder<T>::forward(const Var<T>& z, Dims output, Phase phase) {
    return run(*this, z, output, phase);
}

template <typename T>
Var<T> Decoder<T>::forward(const Var<T>& z, Dims output) const {
    return run(*this, z, output, Phase::eval);
}

template <typename T>
void Decoder<T>::collect(StateRefs<T>& refs, const std::string& prefix) {
    for (std::size_t i = 0; i < deconvs.size(); ++i) {
        deconvs[i].collect(refs, prefix + "deconv" + std::to_string(i) + ".");
        if (i < norms.size()) {
            norms[i].collect(refs, prefix + "bn" + std::to_string(i) + ".");
        }
    }
}

std::string to_string(Mode m) {
    return m == Mode::unconditional ? "unconditional" : "conditional";
}

std::string to_string(ConditionSource c) {
    switch (c) {
        case ConditionSource::none:
            return "none";
        case ConditionSource::paint_quantized:
            return "paint-quantized";
        case ConditionSource::edge_map:
            return "edge-map";
    }
    return "none";
}

Mode mode_from_string(const std::string& s) {
    if (s == "unconditional") {
        return Mode::unconditional;
    }
    if (s == "conditional") {
        return Mode::conditional;
    }
    throw std::invalid_argument("unknown mode '" + s + "' (expected unconditional or conditional)");
}

ConditionSource condition_source_from_string(const std::string& s) {
    if (s == "none") {
        return ConditionSource::none;
    }
    if (s == "paint-quantized") {
        return ConditionSource::paint_quantized;
    }
    if (s == "edge-map") {
        return ConditionSource::edge_map;
    }
    throw std::invalid_argument("unknown condition_source '" + s + "' (expected none, paint-quantized or edge-map)");
}

namespace {

template <typename T>
UpscalingGenerator<T> make_generator(const PyramidInfo& pyramid, const GeneratorConfig& config, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, 0);
    return UpscalingGenerator<T>(pyramid.level_dims, config, rng);
}

}  // namespace

template <typename T>
BasicModelBundle<T>::BasicModelBundle(Mode mode, PyramidInfo pyramid, GeneratorConfig gen_config,
                                      EncoderConfig enc_config, std::uint64_t seed)
    : generator(make_generator<T>(pyramid, gen_config, seed)),
      mode_(mode),
      pyramid_(std::move(pyramid)),
      gen_config_(gen_config),
      enc_config_(std::move(enc_config)) {
    if (mode_ == Mode::unconditional) {
        latent_dims(coarsest_dims(), static_cast<int>(enc_config_.channels.size()));
        Rng rng = Rng::stream(seed, 1);
        encoder.emplace(enc_config_, rng);
        decoder.emplace(enc_config_, rng);
    }
}

template <typename T>
StateRefs<T> BasicModelBundle<T>::generator_state() {
    StateRefs<T> refs;
    generator.collect(refs, "generator.");
    return refs;
}

template <typename T>
StateRefs<T> BasicModelBundle<T>::vae_state() {
    StateRefs<T> refs;
    if (encoder) {
        encoder->collect(refs, "encoder.");
    }
    if (decoder) {
        decoder->collect(refs, "decoder.");
    }
    return refs;
}

template <typename T>
StateRefs<T> BasicModelBundle<T>::state() {
    StateRefs<T> refs = generator_state();
    refs.append(vae_state());
    return refs;
}

template <typename T>
template <typename U>
BasicModelBundle<U> BasicModelBundle<T>::cast() const {
    BasicModelBundle<U> out(mode_, pyramid_, gen_config_, enc_config_, 0);
    auto& self = const_cast<BasicModelBundle&>(*this);
    StateRefs<T> src = self.state();
    StateRefs<U> dst = out.state();
    nn::copy_state(src, dst);
    out.condition_source = condition_source;
    out.palette = palette;
    out.train_config = train_config;
    return out;
}

std::vector<Image> generator_forward(const UpscalingGenerator<float>& g, const Image& x0) {
    return inject_at_scale(g, x0, 0);
}

std::vector<Image> inject_at_scale(const UpscalingGenerator<float>& g, const Image& img, int level) {
    nn::NoGradGuard guard;
    const auto outs = g.forward_from(Var<float>(nn::from_image<float>(img)), level);
    std::vector<Image> images;
    images.reserve(outs.size());
    for (const auto& v : outs) {
        images.push_back(nn::to_image(v.value()));
    }
    return images;
}

LatentCode encode(const Encoder<float>& e, const Image& x0) {
    nn::NoGradGuard guard;
    return LatentCode{e.forward(Var<float>(nn::from_image<float>(x0))).value()};
}

Image decode(const Decoder<float>& d, const LatentCode& z, Dims output, double noise_sigma, Rng& rng) {
    if (noise_sigma < 0.0) {
        throw std::invalid_argument("noise_sigma must be >= 0");
    }
    nn::NoGradGuard guard;
    nn::Tensor<float> code = z.values;
    if (noise_sigma > 0.0) {
        for (auto& v : code.values()) {
            v = static_cast<float>(v + noise_sigma * rng.normal());
        }
    }
    return nn::to_image(d.forward(Var<float>(std::move(code)), output).value());
}

template class GeneratorBlock<float>;
template class GeneratorBlock<double>;
template class UpscalingGenerator<float>;
template class UpscalingGenerator<double>;
template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class BasicModelBundle<float>;
template class BasicModelBundle<double>;
template BasicModelBundle<float> BasicModelBundle<float>::cast<float>() const;
template BasicModelBundle<double> BasicModelBundle<float>::cast<double>() const;
template BasicModelBundle<float> BasicModelBundle<double>::cast<float>() const;
template BasicModelBundle<double> BasicModelBundle<double>::cast<double>() const;

}  // namespace sgen::model
