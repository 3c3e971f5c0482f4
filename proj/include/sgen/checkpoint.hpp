#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "sgen/model.hpp"

namespace sgen::checkpoint {

inline constexpr const char* kFormat = "sgen-bundle";
inline constexpr int kVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.safetensors";

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string config_hash(const nlohmann::json& train_config);

nlohmann::json manifest(const model::ModelBundle& bundle);

// Writes <dir>/manifest.json and <dir>/weights.safetensors (dir is created).
void save_bundle(const model::ModelBundle& bundle, const std::filesystem::path& dir);
// Rebuilds the bundle from the manifest alone and loads its weights. Throws
// CheckpointError on a missing/corrupt/incompatible manifest or a hash
// mismatch.
model::ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace sgen::checkpoint
