#pragma once

// Weight container:
//   bytes 0..7   magic "DAAWGT01"
//   bytes 8..15  u64 little-endian length L of the JSON header
//   next L bytes UTF-8 JSON {"arch": {...}, "data_bytes": D,
//                 "tensors": [{"name", "shape", "dtype", "offset"}, ...]}
//   next D bytes raw little-endian scalars; offsets are relative to this block

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "daa/nn/tensor.hpp"

namespace daa::nn {

static_assert(std::endian::native == std::endian::little, "weight IO assumes a little-endian host");

inline constexpr char kWeightMagic[8] = {'D', 'A', 'A', 'W', 'G', 'T', '0', '1'};

template <class T>
constexpr const char* dtype_name() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? "f32" : "f64";
}

template <class T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

template <class T>
void save_weights(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors,
                  const nlohmann::json& arch) {
    nlohmann::json header;
    header["arch"] = arch;
    auto& list = header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        list.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"dtype", dtype_name<T>()}, {"offset", offset}});
        offset += t.tensor.numel() * sizeof(T);
    }
    header["data_bytes"] = offset;
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kWeightMagic, 8);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors)
        out.write(reinterpret_cast<const char*>(t.tensor.data().data()),
                  static_cast<std::streamsize>(t.tensor.numel() * sizeof(T)));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

template <class T>
struct WeightFile {
    nlohmann::json arch;
    std::vector<NamedTensor<T>> tensors;

    const Tensor<T>& get(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t.tensor;
        throw FormatError("weight file has no tensor named '" + name + "'");
    }
};

template <class T>
WeightFile<T> load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto fail = [&](std::size_t at, const std::string& what) {
        throw FormatError(path.filename().string() + " @" + std::to_string(at) + ": " + what);
    };
    if (bytes.size() < 16) fail(bytes.size(), "truncated weight file");
    if (std::memcmp(bytes.data(), kWeightMagic, 8) != 0) fail(0, "bad magic, expected \"DAAWGT01\"");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (16 + len > bytes.size()) fail(8, "header length exceeds file size");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        fail(16, std::string("malformed header: ") + e.what());
    }
    const std::size_t base = 16 + len;
    const auto data_bytes = header.value("data_bytes", std::uint64_t{0});
    if (base + data_bytes != bytes.size())
        fail(bytes.size(), "expected " + std::to_string(base + data_bytes) + " bytes, file has " +
                               std::to_string(bytes.size()));
    WeightFile<T> wf;
    wf.arch = header.value("arch", nlohmann::json::object());
    for (const auto& e : header.at("tensors")) {
        if (e.at("dtype").get<std::string>() != dtype_name<T>())
            fail(base, "tensor '" + e.at("name").get<std::string>() + "' has dtype " +
                           e.at("dtype").get<std::string>() + ", expected " + dtype_name<T>());
        Shape shape = e.at("shape").get<Shape>();
        for (auto d : shape)
            if (d == 0) fail(base, "tensor '" + e.at("name").get<std::string>() + "' has a zero dimension");
        const auto off = e.at("offset").get<std::uint64_t>();
        const std::size_t n = numel(shape);
        if (off + n * sizeof(T) > data_bytes) fail(base + off, "tensor data runs past end of file");
        std::vector<T> data(n);
        std::memcpy(data.data(), bytes.data() + base + off, n * sizeof(T));
        wf.tensors.push_back({e.at("name").get<std::string>(), Tensor<T>(std::move(shape), std::move(data))});
    }
    return wf;
}

}  // namespace daa::nn
