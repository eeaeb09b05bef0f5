#pragma once

// Dataset container:
//   bytes 0..7    magic "DAAD0001"
//   bytes 8..15   u64 little-endian length L of the manifest
//   next L bytes  JSON lines. Line 1 is a header
//                   {"records": n, "shape": [C, H, W], "dtype": "f32", "meta": {...}}
//                 followed by one line per record {"index", "age", "offset"}
//                 where offset is the absolute byte offset of its image.
//   rest          raw little-endian f32 images, C*H*W values each, in record order

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "daa/data/synthetic.hpp"

namespace daa::data {

static_assert(std::endian::native == std::endian::little, "dataset IO assumes a little-endian host");

inline constexpr char kDatasetMagic[8] = {'D', 'A', 'A', 'D', '0', '0', '0', '1'};

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    const std::size_t per = nn::numel(d.image_shape);
    const std::uint64_t rec_bytes = per * sizeof(float);
    for (const auto& s : d.samples)
        if (s.image.shape() != d.image_shape)
            throw DimensionError("sample " + std::to_string(s.index) + " has shape " + nn::to_string(s.image.shape()) +
                                 ", dataset declares " + nn::to_string(d.image_shape));

    // Offsets depend on the manifest length, which depends on the offsets'
    // digits; iterate until the length is stable.
    std::string manifest;
    std::uint64_t guess = 0;
    for (int iter = 0; iter < 8; ++iter) {
        std::ostringstream m;
        m << nlohmann::json{{"records", d.size()}, {"shape", d.image_shape}, {"dtype", "f32"}, {"meta", d.meta}}.dump()
          << '\n';
        const std::uint64_t base = 16 + guess;
        for (std::size_t k = 0; k < d.size(); ++k)
            m << nlohmann::json{{"index", d.samples[k].index}, {"age", d.samples[k].age}, {"offset", base + k * rec_bytes}}
                     .dump()
              << '\n';
        manifest = m.str();
        if (manifest.size() == guess) break;
        guess = manifest.size();
    }
    if (manifest.size() != guess) throw FormatError("could not settle dataset manifest length");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kDatasetMagic, 8);
    const std::uint64_t len = manifest.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& s : d.samples)
        out.write(reinterpret_cast<const char*>(s.image.data().data()), static_cast<std::streamsize>(rec_bytes));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct LoadedDataset {
    Dataset data;
    std::size_t clamped_labels = 0;  // ages outside [0, 99] forced into range
};

inline LoadedDataset load_dataset_checked(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const std::uint64_t file_size = std::filesystem::file_size(path);
    const std::string where = path.string() + ": ";

    char magic[8] = {};
    if (file_size < 16) throw FormatError(where + "truncated at byte " + std::to_string(file_size) + ", header needs 16 bytes");
    in.read(magic, 8);
    if (std::memcmp(magic, kDatasetMagic, 8) != 0)
        throw FormatError(where + "bad magic at byte 0, expected \"DAAD0001\"");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 8);
    if (16 + len > file_size)
        throw FormatError(where + "truncated at byte " + std::to_string(file_size) + ", manifest declares bytes [16, " +
                          std::to_string(16 + len) + ")");
    std::string manifest(len, '\0');
    in.read(manifest.data(), static_cast<std::streamsize>(len));

    std::istringstream lines(manifest);
    std::string line;
    std::uint64_t line_start = 16;
    auto parse = [&](const std::string& text) {
        try {
            return nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + "bad manifest line at byte " + std::to_string(line_start) + ": " + e.what());
        }
    };
    if (!std::getline(lines, line)) throw FormatError(where + "missing manifest header at byte 16");
    auto header = parse(line);
    LoadedDataset out;
    Dataset& d = out.data;
    std::size_t n = 0;
    try {
        n = header.at("records").get<std::size_t>();
        d.image_shape = header.at("shape").get<nn::Shape>();
        if (header.at("dtype").get<std::string>() != "f32") throw FormatError(where + "unsupported dtype at byte 16");
        d.meta = header.value("meta", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + "bad manifest header at byte 16: " + e.what());
    }
    if (d.image_shape.size() != 3 || nn::numel(d.image_shape) == 0)
        throw FormatError(where + "image shape " + nn::to_string(d.image_shape) + " is not C x H x W");
    const std::uint64_t rec_bytes = nn::numel(d.image_shape) * sizeof(float);

    d.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        line_start += line.size() + 1;
        if (!std::getline(lines, line))
            throw FormatError(where + "manifest ends at byte " + std::to_string(16 + len) + " after " + std::to_string(k) +
                              " of " + std::to_string(n) + " records");
        auto rec = parse(line);
        auto& s = d.samples[k];
        std::uint64_t offset = 0;
        try {
            s.index = rec.at("index").get<std::uint64_t>();
            s.age = rec.at("age").get<int>();
            offset = rec.at("offset").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + "bad record line at byte " + std::to_string(line_start) + ": " + e.what());
        }
        if (offset != 16 + len + k * rec_bytes)
            throw FormatError(where + "record " + std::to_string(k) + " offset " + std::to_string(offset) +
                              " does not follow the previous record (expected " +
                              std::to_string(16 + len + k * rec_bytes) + ")");
        if (offset + rec_bytes > file_size)
            throw FormatError(where + "truncated at byte " + std::to_string(file_size) + ", record " + std::to_string(k) +
                              " needs bytes [" + std::to_string(offset) + ", " + std::to_string(offset + rec_bytes) + ")");
        if (s.age < 0 || s.age > 99) {
            s.age = std::clamp(s.age, 0, 99);
            ++out.clamped_labels;
        }
    }
    const std::uint64_t expected = 16 + len + n * rec_bytes;
    if (file_size != expected)
        throw FormatError(where + "file has " + std::to_string(file_size) + " bytes, layout ends at byte " +
                          std::to_string(expected));

    for (auto& s : d.samples) {
        s.image = nn::Tensor<float>(d.image_shape);
        in.read(reinterpret_cast<char*>(s.image.data().data()), static_cast<std::streamsize>(rec_bytes));
    }
    if (!in) throw IoError("read failed for '" + path.string() + "'");
    return out;
}

inline Dataset load_dataset(const std::filesystem::path& path) { return load_dataset_checked(path).data; }

}  // namespace daa::data
