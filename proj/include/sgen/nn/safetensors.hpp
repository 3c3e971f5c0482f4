#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "sgen/nn/tensor.hpp"

// Reader/writer for the safetensors layout: u64 little-endian header size,
// a JSON header mapping names to {dtype, shape, data_offsets}, then the
// raw little-endian buffer. Only F32 and F64 payloads are handled.
namespace sgen::nn::safetensors {

template <typename T>
void write(const std::filesystem::path& path, const std::map<std::string, Tensor<T>>& tensors,
           const nlohmann::json& metadata = nlohmann::json::object());

// Values are converted to T on read.
template <typename T>
std::map<std::string, Tensor<T>> read(const std::filesystem::path& path);

}  // namespace sgen::nn::safetensors
