#include "sgen/nn/safetensors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sgen::nn::safetensors {

static_assert(std::endian::native == std::endian::little, "safetensors I/O assumes a little-endian host");

namespace {

template <typename T>
constexpr const char* dtype_name() {
    return sizeof(T) == 4 ? "F32" : "F64";
}

}  // namespace

template <typename T>
void write(const std::filesystem::path& path, const std::map<std::string, Tensor<T>>& tensors,
           const nlohmann::json& metadata) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const std::uint64_t bytes = t.numel() * sizeof(T);
        header[name] = {{"dtype", dtype_name<T>()}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    if (!metadata.empty()) {
        nlohmann::json meta = nlohmann::json::object();
        for (const auto& [k, v] : metadata.items()) {
            meta[k] = v.is_string() ? v.template get<std::string>() : v.dump();
        }
        header["__metadata__"] = meta;
    }
    std::string text = header.dump();
    while (text.size() % 8 != 0) {
        text.push_back(' ');
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    const std::uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

template <typename T>
std::map<std::string, Tensor<T>> read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open tensor file " + path.string());
    }
    std::uint64_t size = 0;
    in.read(reinterpret_cast<char*>(&size), sizeof(size));
    if (!in || size == 0 || size > (1ULL << 30)) {
        throw std::runtime_error("corrupt tensor file header in " + path.string());
    }
    std::string text(size, '\0');
    in.read(text.data(), static_cast<std::streamsize>(size));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("corrupt tensor file header in " + path.string() + ": " + e.what());
    }
    std::vector<char> buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") {
            continue;
        }
        const auto dtype = entry.at("dtype").template get<std::string>();
        const auto shape = entry.at("shape").template get<std::vector<int>>();
        const auto begin = entry.at("data_offsets").at(0).template get<std::uint64_t>();
        const auto end = entry.at("data_offsets").at(1).template get<std::uint64_t>();
        const std::size_t n = Tensor<T>::count(shape);
        const std::size_t width = dtype == "F32" ? 4 : dtype == "F64" ? 8 : 0;
        if (width == 0) {
            throw std::runtime_error("unsupported dtype " + dtype + " for '" + name + "' in " + path.string());
        }
        if (end < begin || end > buffer.size() || end - begin != n * width) {
            throw std::runtime_error("bad data offsets for '" + name + "' in " + path.string());
        }
        std::vector<T> values(n);
        const char* src = buffer.data() + begin;
        for (std::size_t i = 0; i < n; ++i) {
            if (width == 4) {
                float f;
                std::memcpy(&f, src + i * 4, 4);
                values[i] = static_cast<T>(f);
            } else {
                double d;
                std::memcpy(&d, src + i * 8, 8);
                values[i] = static_cast<T>(d);
            }
        }
        out.emplace(name, Tensor<T>(shape, std::move(values)));
    }
    return out;
}

template void write<float>(const std::filesystem::path&, const std::map<std::string, Tensor<float>>&,
                           const nlohmann::json&);
template void write<double>(const std::filesystem::path&, const std::map<std::string, Tensor<double>>&,
                            const nlohmann::json&);
template std::map<std::string, Tensor<float>> read<float>(const std::filesystem::path&);
template std::map<std::string, Tensor<double>> read<double>(const std::filesystem::path&);

}  // namespace sgen::nn::safetensors
