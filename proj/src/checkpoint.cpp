#include "sgen/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "sgen/nn/safetensors.hpp"

namespace sgen::checkpoint {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string config_hash(const json& train_config) {
    return hex64(fnv1a(train_config.dump()));
}

namespace {

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

json dims_json(const std::vector<Dims>& dims) {
    json a = json::array();
    for (const auto& d : dims) {
        a.push_back({d.height, d.width});
    }
    return a;
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) {
        throw CheckpointError("manifest is missing '" + where + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw CheckpointError("manifest field '" + where + key + "' has the wrong type: " + e.what());
    }
}

}  // namespace

json manifest(const model::ModelBundle& bundle) {
    const auto& p = bundle.pyramid();
    json m;
    m["format"] = kFormat;
    m["version"] = kVersion;
    m["mode"] = model::to_string(bundle.mode());
    m["condition_source"] = model::to_string(bundle.condition_source);
    m["pyramid"] = {{"scale_factor", p.scale_factor},
                    {"spec", {{"scale_factor", p.spec.scale_factor}, {"min_dim", p.spec.min_dim}, {"max_dim", p.spec.max_dim}}},
                    {"level_dims", dims_json(p.level_dims)}};
    const auto& g = bundle.generator_config();
    m["generator"] = {{"channels", g.channels}, {"layers", g.layers}, {"kernel", g.kernel}, {"blocks", bundle.generator.num_blocks()}};
    if (bundle.has_vae()) {
        const Dims z = bundle.latent_spatial_dims();
        m["encoder"] = {{"channels", bundle.encoder_config().channels},
                        {"latent", {bundle.encoder->latent_channels(), z.height, z.width}}};
    } else {
        m["encoder"] = nullptr;
    }
    if (bundle.palette) {
        json colors = json::array();
        for (const auto& c : bundle.palette->colors) {
            colors.push_back({c[0], c[1], c[2]});
        }
        m["palette"] = colors;
    } else {
        m["palette"] = nullptr;
    }
    m["train_config"] = bundle.train_config;
    m["config_hash"] = config_hash(bundle.train_config);
    return m;
}

void save_bundle(const model::ModelBundle& bundle, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw CheckpointError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
    }
    auto& mut = const_cast<model::ModelBundle&>(bundle);
    const auto refs = mut.state();
    std::map<std::string, nn::Tensor<float>> tensors;
    for (const auto& [name, v] : refs.params) {
        tensors[name] = v->value();
    }
    for (const auto& [name, t] : refs.buffers) {
        tensors[name] = *t;
    }
    const fs::path weights = dir / kWeightsFile;
    nn::safetensors::write(weights, tensors, json{{"format", kFormat}});

    json m = manifest(bundle);
    m["weights_hash"] = hex64(fnv1a(read_bytes(weights)));
    std::ofstream out(dir / kManifestFile);
    out << m.dump(2) << "\n";
    if (!out) {
        throw CheckpointError("failed to write " + (dir / kManifestFile).string());
    }
}

model::ModelBundle load_bundle(const fs::path& dir) {
    const fs::path mpath = dir / kManifestFile;
    if (!fs::exists(mpath)) {
        throw CheckpointError("no " + std::string(kManifestFile) + " in " + dir.string());
    }
    json m;
    try {
        m = json::parse(read_bytes(mpath));
    } catch (const json::parse_error& e) {
        throw CheckpointError("corrupt manifest " + mpath.string() + ": " + e.what());
    }
    if (field<std::string>(m, "format", "") != kFormat) {
        throw CheckpointError("manifest format is not '" + std::string(kFormat) + "'");
    }
    const int version = field<int>(m, "version", "");
    if (version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                              std::to_string(kVersion) + ")");
    }
    const json train_config = m.value("train_config", json::object());
    const std::string want_cfg = field<std::string>(m, "config_hash", "");
    if (config_hash(train_config) != want_cfg) {
        throw CheckpointError("config hash mismatch in " + mpath.string() + ": manifest says " + want_cfg +
                              ", train_config hashes to " + config_hash(train_config));
    }
    const fs::path weights = dir / kWeightsFile;
    const std::string want_w = field<std::string>(m, "weights_hash", "");
    const std::string got_w = hex64(fnv1a(read_bytes(weights)));
    if (got_w != want_w) {
        throw CheckpointError("weights hash mismatch: manifest says " + want_w + ", " + weights.string() + " hashes to " +
                              got_w);
    }

    model::PyramidInfo pyr;
    const json& pj = m.at("pyramid");
    pyr.scale_factor = field<double>(pj, "scale_factor", "pyramid.");
    const json& sj = pj.at("spec");
    pyr.spec.scale_factor = field<double>(sj, "scale_factor", "pyramid.spec.");
    pyr.spec.min_dim = field<int>(sj, "min_dim", "pyramid.spec.");
    pyr.spec.max_dim = field<int>(sj, "max_dim", "pyramid.spec.");
    for (const auto& d : field<std::vector<std::vector<int>>>(pj, "level_dims", "pyramid.")) {
        if (d.size() != 2) {
            throw CheckpointError("pyramid.level_dims entries must be [height, width]");
        }
        pyr.level_dims.push_back(Dims{d[0], d[1]});
    }
    model::GeneratorConfig gcfg;
    const json& gj = m.at("generator");
    gcfg.channels = field<int>(gj, "channels", "generator.");
    gcfg.layers = field<int>(gj, "layers", "generator.");
    gcfg.kernel = field<int>(gj, "kernel", "generator.");
    model::EncoderConfig ecfg;
    const model::Mode mode = model::mode_from_string(field<std::string>(m, "mode", ""));
    if (!m["encoder"].is_null()) {
        ecfg.channels = field<std::vector<int>>(m["encoder"], "channels", "encoder.");
    }
    if ((mode == model::Mode::unconditional) == m["encoder"].is_null()) {
        throw CheckpointError("manifest mode '" + model::to_string(mode) + "' is inconsistent with its encoder entry");
    }

    model::ModelBundle bundle(mode, pyr, gcfg, ecfg, 0);
    bundle.condition_source = model::condition_source_from_string(field<std::string>(m, "condition_source", ""));
    bundle.train_config = train_config;
    if (m.contains("palette") && !m["palette"].is_null()) {
        imaging::Palette pal;
        for (const auto& c : m["palette"]) {
            pal.colors.push_back(Rgb{c.at(0).get<float>(), c.at(1).get<float>(), c.at(2).get<float>()});
        }
        bundle.palette = pal;
    }

    std::map<std::string, nn::Tensor<float>> tensors;
    try {
        tensors = nn::safetensors::read<float>(weights);
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("cannot read weights: ") + e.what());
    }
    nn::StateRefs<float> src;
    for (auto& [name, t] : tensors) {
        src.buffers.emplace_back(name, &t);
    }
    auto dst = bundle.state();
    try {
        nn::copy_state(src, dst);
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("weights do not match the manifest architecture: ") + e.what());
    }
    return bundle;
}

}  // namespace sgen::checkpoint
