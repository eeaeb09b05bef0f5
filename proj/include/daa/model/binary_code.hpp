#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "daa/nn/tensor.hpp"

namespace daa::model {

inline constexpr int kNumStyleAges = 100;
inline constexpr int kCodeBits = 8;

using AgeCode = std::array<std::uint8_t, kCodeBits>;

/// 8-bit expansion of (age + 1), most significant bit first.
inline AgeCode age_to_binary(int age) {
    if (age < 0 || age >= kNumStyleAges)
        throw RangeError("style age " + std::to_string(age) + " outside [0, 99]");
    const unsigned v = static_cast<unsigned>(age) + 1u;
    AgeCode code{};
    for (int b = 0; b < kCodeBits; ++b) code[b] = static_cast<std::uint8_t>((v >> (kCodeBits - 1 - b)) & 1u);
    return code;
}

enum class CodeNorm { none, column_standardize, unit_range };

inline std::string to_string(CodeNorm n) {
    switch (n) {
        case CodeNorm::none: return "none";
        case CodeNorm::column_standardize: return "column-standardize";
        case CodeNorm::unit_range: return "scale-to-[0,1]";
    }
    return "?";
}

inline CodeNorm code_norm_from_string(const std::string& s) {
    if (s == "none") return CodeNorm::none;
    if (s == "column-standardize") return CodeNorm::column_standardize;
    if (s == "scale-to-[0,1]") return CodeNorm::unit_range;
    throw ConfigError("unknown code normalization '" + s + "' (none | column-standardize | scale-to-[0,1])");
}

struct BinaryCodeMatrix {
    std::array<AgeCode, kNumStyleAges> bits{};
    nn::Tensor<double> normalized;  // 100 x 8
};

/// Stacks the codes of ages 0..99 and normalizes each bit column.
/// Constant columns map to all-zero columns under both rescaling schemes.
inline BinaryCodeMatrix build_code_matrix(CodeNorm norm = CodeNorm::column_standardize) {
    BinaryCodeMatrix m;
    m.normalized = nn::Tensor<double>(nn::Shape{kNumStyleAges, kCodeBits});
    for (int y = 0; y < kNumStyleAges; ++y) {
        m.bits[y] = age_to_binary(y);
        for (int b = 0; b < kCodeBits; ++b) m.normalized[y * kCodeBits + b] = m.bits[y][b];
    }
    if (norm == CodeNorm::none) return m;
    for (int b = 0; b < kCodeBits; ++b) {
        double mean = 0, lo = 1, hi = 0;
        for (int y = 0; y < kNumStyleAges; ++y) {
            const double v = m.normalized[y * kCodeBits + b];
            mean += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        mean /= kNumStyleAges;
        double var = 0;
        for (int y = 0; y < kNumStyleAges; ++y) {
            const double d = m.normalized[y * kCodeBits + b] - mean;
            var += d * d;
        }
        var /= kNumStyleAges;
        for (int y = 0; y < kNumStyleAges; ++y) {
            double& v = m.normalized[y * kCodeBits + b];
            if (hi == lo) {
                v = 0.0;
            } else if (norm == CodeNorm::column_standardize) {
                v = (v - mean) / std::sqrt(var);
            } else {
                v = (v - lo) / (hi - lo);
            }
        }
    }
    return m;
}

}  // namespace daa::model
