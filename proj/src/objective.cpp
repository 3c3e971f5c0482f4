#include "sgen/objective.hpp"

#include <cstdlib>
#include <type_traits>

#include "sgen/imaging.hpp"
#include "sgen/nn/safetensors.hpp"

namespace sgen::objective {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(LossMode m) {
    return m == LossMode::pixel ? "pixel" : "perceptual";
}

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "pixel") {
        return LossMode::pixel;
    }
    if (s == "perceptual") {
        return LossMode::perceptual;
    }
    throw std::invalid_argument("unknown loss mode '" + s + "' (expected pixel or perceptual)");
}

fs::path resolve_weights(const std::optional<fs::path>& explicit_path, const char* file) {
    fs::path path;
    if (explicit_path) {
        path = *explicit_path;
    } else if (const char* dir = std::getenv(kWeightsEnv); dir != nullptr && *dir != '\0') {
        path = fs::path(dir) / file;
    } else {
        throw MissingWeightsError(std::string("pretrained weights '") + file + "' not found: set " + kWeightsEnv +
                                  " to a directory containing it (create it with tools/export_weights.py), or use "
                                  "the pixel loss mode / fallback extractor");
    }
    if (!fs::exists(path)) {
        throw MissingWeightsError("pretrained weights file " + path.string() +
                                  " does not exist; create it with tools/export_weights.py");
    }
    return path;
}

namespace {

// torchvision vgg19().features indices: conv layers, and a 'M' marker after
// each pooling stage.
struct VggLayer {
    int index;
    int in;
    int out;
};

const std::vector<std::vector<VggLayer>>& vgg_stages() {
    static const std::vector<std::vector<VggLayer>> stages = {
        {{0, 3, 64}, {2, 64, 64}},
        {{5, 64, 128}, {7, 128, 128}},
        {{10, 128, 256}, {12, 256, 256}, {14, 256, 256}, {16, 256, 256}},
        {{19, 256, 512}, {21, 512, 512}, {23, 512, 512}, {25, 512, 512}},
    };
    return stages;
}

}  // namespace

template <typename T>
Vgg19Features<T> Vgg19Features<T>::load(const fs::path& path) {
    const auto tensors = nn::safetensors::read<T>(path);
    Vgg19Features net;
    for (const auto& stage : vgg_stages()) {
        for (const auto& l : stage) {
            const std::string base = "features." + std::to_string(l.index) + ".";
            auto w = tensors.find(base + "weight");
            auto b = tensors.find(base + "bias");
            if (w == tensors.end() || b == tensors.end()) {
                throw MissingWeightsError(path.string() + " lacks " + base + "weight/bias; is it a VGG19 export?");
            }
            const std::vector<int> wshape{l.out, l.in, 3, 3};
            if (w->second.shape() != wshape || b->second.shape() != std::vector<int>{l.out}) {
                throw MissingWeightsError(path.string() + ": unexpected shape for " + base + "weight " +
                                          nn::shape_str(w->second.shape()));
            }
            nn::Conv2d<T> conv;
            conv.weight = Var<T>(w->second, false);
            conv.bias = Var<T>(b->second, false);
            conv.stride = 1;
            conv.padding = 1;
            conv.mode = nn::PadMode::zeros;
            net.convs.push_back(std::move(conv));
        }
    }
    return net;
}

template <typename T>
std::vector<Var<T>> Vgg19Features<T>::taps(const Var<T>& image) const {
    static const double mean[3] = {0.485, 0.456, 0.406};
    static const double stdv[3] = {0.229, 0.224, 0.225};
    std::vector<T> scale(3);
    std::vector<T> shift(3);
    for (int c = 0; c < 3; ++c) {
        scale[c] = static_cast<T>(0.5 / stdv[c]);
        shift[c] = static_cast<T>((0.5 - mean[c]) / stdv[c]);
    }
    Var<T> h = nn::affine_channels(image, scale, shift);
    std::vector<Var<T>> out;
    std::size_t k = 0;
    for (const auto& stage : vgg_stages()) {
        for (std::size_t i = 0; i < stage.size(); ++i, ++k) {
            h = nn::relu(convs[k].forward(h));
        }
        if (h.shape()[1] < 2 || h.shape()[2] < 2) {
            break;
        }
        h = nn::max_pool2d(h, 2, 2);
        out.push_back(h);
    }
    return out;
}

template <typename T>
Distance<T> Distance<T>::pixel() {
    return Distance{};
}

template <typename T>
Distance<T> Distance<T>::perceptual(const fs::path& vgg_weights) {
    Distance d;
    d.mode_ = LossMode::perceptual;
    d.vgg_ = std::make_shared<const Vgg19Features<T>>(Vgg19Features<T>::load(vgg_weights));
    return d;
}

template <typename T>
Distance<T> Distance<T>::make(LossMode mode, const std::optional<fs::path>& weights) {
    if (mode == LossMode::pixel) {
        return pixel();
    }
    return perceptual(resolve_weights(weights, kVggFile));
}

template <typename T>
Var<T> Distance<T>::operator()(const Var<T>& a, const Var<T>& b) const {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("distance between mismatched shapes " + nn::shape_str(a.shape()) + " and " +
                                    nn::shape_str(b.shape()));
    }
    Var<T> pix = nn::mean_abs_diff(a, b);
    if (mode_ == LossMode::pixel) {
        return pix;
    }
    const auto fa = vgg_->taps(a);
    const auto fb = vgg_->taps(b);
    Var<T> total = nn::scale(pix, static_cast<T>(kPixelTermWeight));
    for (std::size_t i = 0; i < fa.size(); ++i) {
        total = nn::add(total, nn::mean_abs_diff(nn::channel_normalize(fa[i]), nn::channel_normalize(fb[i])));
    }
    return total;
}

double perceptual_distance(const Image& a, const Image& b, const Distance<float>& d) {
    if (a.dims() != b.dims()) {
        throw std::invalid_argument("perceptual_distance: image dims differ");
    }
    nn::NoGradGuard guard;
    return d(Var<float>(nn::from_image<float>(a)), Var<float>(nn::from_image<float>(b))).item();
}

json to_json(const LossReport& r) {
    return json{{"upscaling", r.upscaling},
                {"reconstruction_l0", r.reconstruction_l0},
                {"kl", r.kl},
                {"total", r.total},
                {"per_level", r.per_level}};
}

LossReport loss_report_from_json(const json& j) {
    LossReport r;
    r.upscaling = j.at("upscaling").get<double>();
    r.reconstruction_l0 = j.at("reconstruction_l0").get<double>();
    r.kl = j.at("kl").get<double>();
    r.total = j.at("total").get<double>();
    r.per_level = j.at("per_level").get<std::vector<double>>();
    return r;
}

template <typename T>
UpscalingTerms<T> upscaling_loss(const std::vector<Var<T>>& preds, const std::vector<Var<T>>& targets,
                                 const Distance<T>& d) {
    if (preds.size() != targets.size()) {
        throw std::invalid_argument("upscaling_loss: " + std::to_string(preds.size()) + " predictions for " +
                                    std::to_string(targets.size()) + " pyramid levels");
    }
    UpscalingTerms<T> out;
    out.total = nn::constant(nn::Tensor<T>({1}));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        Var<T> term = d(preds[i], targets[i]);
        out.per_level.push_back(term);
        out.total = nn::add(out.total, term);
    }
    return out;
}

UpscalingLoss upscaling_loss(const std::vector<Image>& preds, const ImagePyramid& pyramid, const Distance<float>& d) {
    if (pyramid.num_levels() < 1 || preds.size() != static_cast<std::size_t>(pyramid.num_levels() - 1)) {
        throw std::invalid_argument("upscaling_loss: " + std::to_string(preds.size()) +
                                    " predictions for a pyramid with " + std::to_string(pyramid.num_levels()) +
                                    " levels");
    }
    UpscalingLoss out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double v = perceptual_distance(preds[i], pyramid.levels[i + 1], d);
        out.per_level.push_back(v);
        out.total += v;
    }
    return out;
}

template <typename T>
Var<T> kl_loss(const Var<T>& z, T alpha) {
    if (alpha < T(0)) {
        throw std::invalid_argument("kl alpha must be >= 0");
    }
    return nn::scale(nn::sum_squares(z), alpha);
}

double kl_loss(const model::LatentCode& z, double alpha) {
    if (alpha < 0.0) {
        throw std::invalid_argument("kl alpha must be >= 0");
    }
    double s = 0.0;
    for (float v : z.values.values()) {
        s += static_cast<double>(v) * v;
    }
    return alpha * s;
}

template <typename T>
Image coarse_condition(const model::BasicModelBundle<T>& bundle, const Image& condition) {
    const Dims coarse = bundle.coarsest_dims();
    switch (bundle.condition_source) {
        case model::ConditionSource::paint_quantized: {
            if (!bundle.palette) {
                throw model::ModeError("paint-conditioned bundle has no palette");
            }
            return imaging::apply_palette(imaging::resample(condition, coarse), *bundle.palette);
        }
        case model::ConditionSource::edge_map:
            return imaging::binarize(imaging::resample(condition, coarse), kEdgeCoverageThreshold);
        case model::ConditionSource::none:
            break;
    }
    throw model::ModeError("bundle has no condition source; conditional input requires paint-quantized or edge-map");
}

namespace {

template <typename M, typename... Args>
auto run_module(M& m, nn::Phase phase, const Args&... args) {
    if constexpr (std::is_const_v<M>) {
        return m.forward(args...);
    } else {
        return m.forward(args..., phase);
    }
}

template <typename T, typename B>
LossGraph<T> build_total(B& bundle, const warp::AugmentedSample& sample, const Distance<T>& d,
                         const TotalLossOptions& options, Rng& rng) {
    if (options.alpha < 0.0 || options.noise_sigma < 0.0) {
        throw std::invalid_argument("alpha and noise_sigma must be >= 0");
    }
    const auto& dims = bundle.pyramid().level_dims;
    if (sample.image.dims() != dims.back()) {
        throw std::invalid_argument("sample image dims do not match the bundle's finest level");
    }
    const ImagePyramid pyr = imaging::build_pyramid_with_dims(sample.image, dims);
    std::vector<Var<T>> targets;
    for (std::size_t n = 1; n < pyr.levels.size(); ++n) {
        targets.push_back(nn::constant(nn::from_image<T>(pyr.levels[n])));
    }
    const Var<T> x0 = nn::constant(nn::from_image<T>(pyr.levels[0]));

    LossGraph<T> g;
    Var<T> kl;
    Var<T> l0;
    Var<T> g_input;
    if (bundle.mode() == model::Mode::unconditional) {
        if (!bundle.has_vae()) {
            throw model::ModeError("unconditional objective needs an encoder/decoder");
        }
        if (sample.condition) {
            throw model::ModeError("unconditional bundle received a conditioned sample");
        }
        Var<T> z = run_module(*bundle.encoder, options.phase, x0);
        kl = kl_loss(z, static_cast<T>(options.alpha));
        Var<T> zn = z;
        if (options.noise_sigma > 0.0) {
            nn::Tensor<T> eps(z.shape());
            for (auto& v : eps.values()) {
                v = static_cast<T>(options.noise_sigma * rng.normal());
            }
            zn = nn::add(z, nn::constant(std::move(eps)));
        }
        Var<T> x0_tilde = run_module(*bundle.decoder, options.phase, zn, dims.front());
        l0 = d(x0_tilde, x0);
        g_input = options.feed_decoded ? x0_tilde : x0;
    } else {
        if (!sample.condition) {
            throw model::ModeError("conditional objective needs a condition map in the sample");
        }
        g_input = nn::constant(nn::from_image<T>(coarse_condition(bundle, *sample.condition)));
    }
    const auto preds = run_module(bundle.generator, options.phase, g_input);
    const auto up = upscaling_loss(preds, targets, d);

    g.total = up.total;
    if (kl.defined()) {
        g.total = nn::add(nn::add(kl, l0), up.total);
        g.report.kl = kl.item();
        g.report.reconstruction_l0 = l0.item();
    }
    g.report.upscaling = up.total.item();
    for (const auto& v : up.per_level) {
        g.report.per_level.push_back(v.item());
    }
    g.report.total = g.report.kl + g.report.reconstruction_l0 + g.report.upscaling;
    return g;
}

}  // namespace

template <typename T>
LossGraph<T> total_loss_graph(model::BasicModelBundle<T>& bundle, const warp::AugmentedSample& sample,
                              const Distance<T>& d, const TotalLossOptions& options, Rng& rng) {
    return build_total<T>(bundle, sample, d, options, rng);
}

LossReport total_loss(const model::ModelBundle& bundle, const warp::AugmentedSample& sample, double alpha,
                      double noise_sigma, Rng& rng, const Distance<float>& d, bool feed_decoded) {
    nn::NoGradGuard guard;
    TotalLossOptions opts;
    opts.alpha = alpha;
    opts.noise_sigma = noise_sigma;
    opts.feed_decoded = feed_decoded;
    opts.phase = nn::Phase::eval;
    return build_total<float>(bundle, sample, d, opts, rng).report;
}

template class Vgg19Features<float>;
template class Vgg19Features<double>;
template class Distance<float>;
template class Distance<double>;
template UpscalingTerms<float> upscaling_loss(const std::vector<Var<float>>&, const std::vector<Var<float>>&,
                                              const Distance<float>&);
template UpscalingTerms<double> upscaling_loss(const std::vector<Var<double>>&, const std::vector<Var<double>>&,
                                               const Distance<double>&);
template Var<float> kl_loss(const Var<float>&, float);
template Var<double> kl_loss(const Var<double>&, double);
template Image coarse_condition(const model::BasicModelBundle<float>&, const Image&);
template Image coarse_condition(const model::BasicModelBundle<double>&, const Image&);
template LossGraph<float> total_loss_graph(model::BasicModelBundle<float>&, const warp::AugmentedSample&,
                                          const Distance<float>&, const TotalLossOptions&, Rng&);
template LossGraph<double> total_loss_graph(model::BasicModelBundle<double>&, const warp::AugmentedSample&,
                                           const Distance<double>&, const TotalLossOptions&, Rng&);

}  // namespace sgen::objective
