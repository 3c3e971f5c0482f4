#include "sgen/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace sgen::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& parts) {
    std::string out = "invalid training config:";
    for (const auto& p : parts) {
        out += "\n  - " + p;
    }
    return out;
}

// Reads typed fields from one JSON object, recording problems instead of
// throwing so every bad field is reported at once.
class Reader {
  public:
    Reader(const json& obj, std::string prefix, std::vector<std::string>& problems)
        : obj_(obj), prefix_(std::move(prefix)), problems_(problems) {
        if (!obj_.is_object()) {
            problems_.push_back(where("") + ": expected an object");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!obj_.is_object() || !obj_.contains(key)) {
            return;
        }
        const json& v = obj_.at(key);
        if (!type_ok<T>(v)) {
            problems_.push_back(where(key) + ": expected " + type_name<T>() + ", got " + v.type_name());
            return;
        }
        out = v.get<T>();
    }

    const json* section(const char* key) {
        seen_.insert(key);
        if (!obj_.is_object() || !obj_.contains(key)) {
            return nullptr;
        }
        return &obj_.at(key);
    }

    bool has(const char* key) const { return obj_.is_object() && obj_.contains(key); }

    void finish() {
        if (!obj_.is_object()) {
            return;
        }
        for (const auto& [k, v] : obj_.items()) {
            if (!seen_.count(k)) {
                problems_.push_back(where(k) + ": unknown field");
            }
        }
    }

    std::string where(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  private:
    template <typename T>
    static bool type_ok(const json& v) {
        if constexpr (std::is_same_v<T, bool>) {
            return v.is_boolean();
        } else if constexpr (std::is_integral_v<T>) {
            return std::is_unsigned_v<T> ? v.is_number_unsigned() : v.is_number_integer();
        } else if constexpr (std::is_floating_point_v<T>) {
            return v.is_number();
        } else if constexpr (std::is_same_v<T, std::string>) {
            return v.is_string();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!v.is_array()) {
                return false;
            }
            for (const auto& e : v) {
                if (!e.is_number_integer()) {
                    return false;
                }
            }
            return true;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            if (!v.is_array()) {
                return false;
            }
            for (const auto& e : v) {
                if (!e.is_number()) {
                    return false;
                }
            }
            return true;
        } else {
            return false;
        }
    }

    template <typename T>
    static std::string type_name() {
        if constexpr (std::is_same_v<T, bool>) {
            return "a boolean";
        } else if constexpr (std::is_integral_v<T>) {
            return "an integer";
        } else if constexpr (std::is_floating_point_v<T>) {
            return "a number";
        } else if constexpr (std::is_same_v<T, std::string>) {
            return "a string";
        } else {
            return "an array of numbers";
        }
    }

    const json& obj_;
    std::string prefix_;
    std::vector<std::string>& problems_;
    std::set<std::string> seen_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

TrainConfig from_json(const json& j) {
    TrainConfig c;
    std::vector<std::string> problems;
    Reader r(j, "", problems);

    r.get("version", c.version);
    if (!r.has("image_path")) {
        problems.push_back("image_path: required field is missing");
    }
    r.get("image_path", c.image_path);

    std::string mode = model::to_string(c.mode);
    std::string source = model::to_string(c.condition_source);
    std::string loss = objective::to_string(c.loss_mode);
    r.get("mode", mode);
    r.get("condition_source", source);
    r.get("loss_mode", loss);
    try {
        c.mode = model::mode_from_string(mode);
    } catch (const std::exception& e) {
        problems.push_back(std::string("mode: ") + e.what());
    }
    try {
        c.condition_source = model::condition_source_from_string(source);
    } catch (const std::exception& e) {
        problems.push_back(std::string("condition_source: ") + e.what());
    }
    try {
        c.loss_mode = objective::loss_mode_from_string(loss);
    } catch (const std::exception& e) {
        problems.push_back(std::string("loss_mode: ") + e.what());
    }

    r.get("iterations", c.iterations);
    r.get("lr", c.lr);
    std::vector<double> betas{c.beta1, c.beta2};
    r.get("betas", betas);
    if (betas.size() == 2) {
        c.beta1 = betas[0];
        c.beta2 = betas[1];
    } else {
        problems.push_back("betas: expected two numbers");
    }
    r.get("schedule", c.schedule);
    r.get("grad_clip", c.grad_clip);
    r.get("alpha", c.alpha);
    r.get("noise_sigma", c.noise_sigma);
    r.get("feed_decoded", c.feed_decoded);
    if (r.has("vgg_weights") && !j.at("vgg_weights").is_null()) {
        std::string p;
        r.get("vgg_weights", p);
        c.vgg_weights = p;
    } else {
        r.section("vgg_weights");
    }
    r.get("palette_size", c.palette_size);
    r.get("seed", c.seed);
    r.get("checkpoint_every", c.checkpoint_every);
    r.get("workers", c.workers);

    if (const json* p = r.section("pyramid")) {
        Reader s(*p, "pyramid", problems);
        s.get("scale_factor", c.pyramid.scale_factor);
        s.get("min_dim", c.pyramid.min_dim);
        s.get("max_dim", c.pyramid.max_dim);
        s.finish();
    }
    if (const json* p = r.section("augmentation")) {
        Reader s(*p, "augmentation", problems);
        std::vector<double> crop{c.augmentation.crop_fraction_range.first, c.augmentation.crop_fraction_range.second};
        s.get("crop_fraction_range", crop);
        if (crop.size() == 2) {
            c.augmentation.crop_fraction_range = {crop[0], crop[1]};
        } else {
            problems.push_back("augmentation.crop_fraction_range: expected [lo, hi]");
        }
        s.get("flip_probability", c.augmentation.flip_probability);
        s.get("tps_magnitude", c.augmentation.tps_magnitude);
        s.get("tps_grid", c.augmentation.tps_grid);
        s.get("tps_lambda", c.augmentation.tps_lambda);
        s.finish();
    }
    if (const json* p = r.section("generator")) {
        Reader s(*p, "generator", problems);
        s.get("channels", c.generator.channels);
        s.get("layers", c.generator.layers);
        s.get("kernel", c.generator.kernel);
        s.finish();
    }
    if (const json* p = r.section("encoder")) {
        Reader s(*p, "encoder", problems);
        s.get("channels", c.encoder.channels);
        s.finish();
    }
    if (const json* p = r.section("canny")) {
        Reader s(*p, "canny", problems);
        s.get("sigma", c.canny.sigma);
        s.get("low_threshold", c.canny.low_threshold);
        s.get("high_threshold", c.canny.high_threshold);
        s.finish();
    }
    r.finish();
    c.augmentation.seed = c.seed;

    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    validate(c);
    return c;
}

void validate(const TrainConfig& c) {
    std::vector<std::string> p;
    if (c.version != kSchemaVersion) {
        p.push_back("version: unsupported schema version " + std::to_string(c.version) + " (expected " +
                    std::to_string(kSchemaVersion) + ")");
    }
    if (c.image_path.empty()) {
        p.push_back("image_path: must be a non-empty path");
    }
    if (c.mode == model::Mode::unconditional && c.condition_source != model::ConditionSource::none) {
        p.push_back("condition_source: must be none in unconditional mode");
    }
    if (c.mode == model::Mode::conditional && c.condition_source == model::ConditionSource::none) {
        p.push_back("condition_source: conditional mode needs paint-quantized or edge-map");
    }
    if (c.iterations < 1) {
        p.push_back("iterations: must be >= 1");
    }
    if (!(c.lr > 0.0)) {
        p.push_back("lr: must be > 0");
    }
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
        p.push_back("betas: each must lie in [0, 1)");
    }
    if (c.schedule != "cosine" && c.schedule != "constant") {
        p.push_back("schedule: must be cosine or constant");
    }
    if (!(c.grad_clip >= 0.0)) {
        p.push_back("grad_clip: must be >= 0");
    }
    if (!(c.alpha >= 0.0)) {
        p.push_back("alpha: must be >= 0");
    }
    if (!(c.noise_sigma >= 0.0)) {
        p.push_back("noise_sigma: must be >= 0");
    }
    if (!(c.pyramid.scale_factor > 0.0 && c.pyramid.scale_factor < 1.0)) {
        p.push_back("pyramid.scale_factor: must lie in (0, 1)");
    }
    if (c.pyramid.min_dim < 1) {
        p.push_back("pyramid.min_dim: must be >= 1");
    }
    if (c.pyramid.max_dim < c.pyramid.min_dim) {
        p.push_back("pyramid.max_dim: must be >= pyramid.min_dim");
    }
    try {
        c.augmentation.validate();
    } catch (const std::exception& e) {
        p.push_back(std::string("augmentation: ") + e.what());
    }
    if (c.generator.channels < 1) {
        p.push_back("generator.channels: must be >= 1");
    }
    if (c.generator.layers < 2) {
        p.push_back("generator.layers: must be >= 2");
    }
    if (c.generator.kernel < 1 || c.generator.kernel % 2 == 0) {
        p.push_back("generator.kernel: must be a positive odd number");
    }
    if (c.encoder.channels.empty()) {
        p.push_back("encoder.channels: must list at least one stage");
    }
    for (int ch : c.encoder.channels) {
        if (ch < 1) {
            p.push_back("encoder.channels: entries must be >= 1");
            break;
        }
    }
    if (c.palette_size < 2) {
        p.push_back("palette_size: must be >= 2");
    }
    if (!(c.canny.low_threshold >= 0.0 && c.canny.low_threshold < c.canny.high_threshold)) {
        p.push_back("canny: need 0 <= low_threshold < high_threshold");
    }
    if (!(c.canny.sigma > 0.0)) {
        p.push_back("canny.sigma: must be > 0");
    }
    if (c.checkpoint_every < 0) {
        p.push_back("checkpoint_every: must be >= 0");
    }
    if (c.workers < 0) {
        p.push_back("workers: must be >= 0");
    }
    if (!p.empty()) {
        throw ConfigError(std::move(p));
    }
}

json to_json(const TrainConfig& c) {
    json j;
    j["version"] = c.version;
    j["image_path"] = c.image_path;
    j["mode"] = model::to_string(c.mode);
    j["condition_source"] = model::to_string(c.condition_source);
    j["iterations"] = c.iterations;
    j["lr"] = c.lr;
    j["betas"] = {c.beta1, c.beta2};
    j["schedule"] = c.schedule;
    j["grad_clip"] = c.grad_clip;
    j["alpha"] = c.alpha;
    j["noise_sigma"] = c.noise_sigma;
    j["feed_decoded"] = c.feed_decoded;
    j["loss_mode"] = objective::to_string(c.loss_mode);
    j["vgg_weights"] = c.vgg_weights ? json(*c.vgg_weights) : json(nullptr);
    j["pyramid"] = {{"scale_factor", c.pyramid.scale_factor},
                    {"min_dim", c.pyramid.min_dim},
                    {"max_dim", c.pyramid.max_dim}};
    j["augmentation"] = {
        {"crop_fraction_range", {c.augmentation.crop_fraction_range.first, c.augmentation.crop_fraction_range.second}},
        {"flip_probability", c.augmentation.flip_probability},
        {"tps_magnitude", c.augmentation.tps_magnitude},
        {"tps_grid", c.augmentation.tps_grid},
        {"tps_lambda", c.augmentation.tps_lambda}};
    j["generator"] = {{"channels", c.generator.channels}, {"layers", c.generator.layers}, {"kernel", c.generator.kernel}};
    j["encoder"] = {{"channels", c.encoder.channels}};
    j["palette_size"] = c.palette_size;
    j["canny"] = {{"sigma", c.canny.sigma},
                  {"low_threshold", c.canny.low_threshold},
                  {"high_threshold", c.canny.high_threshold}};
    j["seed"] = c.seed;
    j["checkpoint_every"] = c.checkpoint_every;
    j["workers"] = c.workers;
    return j;
}

TrainConfig load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json schema() {
    auto num = [](const char* desc) { return json{{"type", "number"}, {"description", desc}}; };
    auto integer = [](const char* desc) { return json{{"type", "integer"}, {"description", desc}}; };
    json s;
    s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
    s["title"] = "sgen training config";
    s["type"] = "object";
    s["additionalProperties"] = false;
    s["required"] = {"image_path"};
    s["properties"] = {
        {"version", {{"const", kSchemaVersion}}},
        {"image_path", {{"type", "string"}, {"minLength", 1}}},
        {"mode", {{"enum", {"unconditional", "conditional"}}}},
        {"condition_source", {{"enum", {"none", "paint-quantized", "edge-map"}}}},
        {"iterations", {{"type", "integer"}, {"minimum", 1}}},
        {"lr", {{"type", "number"}, {"exclusiveMinimum", 0}}},
        {"betas", {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 2}, {"maxItems", 2}}},
        {"schedule", {{"enum", {"cosine", "constant"}}}},
        {"grad_clip", num("global gradient-norm cap, 0 disables")},
        {"alpha", num("weight inside the KL term")},
        {"noise_sigma", num("std of the noise added to the latent code while training")},
        {"feed_decoded", {{"type", "boolean"}}},
        {"loss_mode", {{"enum", {"pixel", "perceptual"}}}},
        {"vgg_weights", {{"type", {"string", "null"}}}},
        {"pyramid",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"scale_factor", num("ratio in (0,1)")}, {"min_dim", integer("")}, {"max_dim", integer("")}}}}},
        {"augmentation",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"crop_fraction_range", {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 2}, {"maxItems", 2}}},
            {"flip_probability", num("")},
            {"tps_magnitude", num("fraction of the grid spacing")},
            {"tps_grid", integer("")},
            {"tps_lambda", num("")}}}}},
        {"generator",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"channels", integer("")}, {"layers", integer("")}, {"kernel", integer("")}}}}},
        {"encoder",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"channels", {{"type", "array"}, {"items", {{"type", "integer"}}}}}}}}},
        {"palette_size", integer("colors in the paint palette")},
        {"canny",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"sigma", num("")}, {"low_threshold", num("")}, {"high_threshold", num("")}}}}},
        {"seed", {{"type", "integer"}, {"minimum", 0}}},
        {"checkpoint_every", {{"type", "integer"}, {"minimum", 0}}},
        {"workers", {{"type", "integer"}, {"minimum", 0}}},
    };
    return s;
}

}  // namespace sgen::config
