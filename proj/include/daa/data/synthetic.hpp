#pragma once

// Synthetic "aging texture" images. Each image is a smooth random field plus
// an oriented sinusoid whose frequency rises with age, affinely renormalized
// so that its global mean grows and its global std shrinks with age.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daa/nn.hpp"

namespace daa::data {

struct Sample {
    nn::Tensor<float> image;  // C x S x S
    int age = 0;
    std::uint64_t index = 0;
};

struct Dataset {
    nn::Shape image_shape{3, 128, 128};
    std::vector<Sample> samples;
    nlohmann::json meta = nlohmann::json::object();

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

struct SyntheticSpec {
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    int age_min = 0;
    int age_max = 99;
    double mean_base = 0.3;     // a
    double mean_slope = 0.004;  // b
    double std_base = 0.30;     // c
    double std_slope = 0.0022;  // d
    double std_floor = 0.05;
    double texture_freq_gain = 0.02;
    double texture_base_freq = 6.0;  // cycles across the image at age 0
    double texture_amp = 0.8;        // relative to the unit-variance field
    std::size_t field_grid = 8;
    std::size_t image_size = 128;
    std::size_t channels = 3;
    std::uint64_t seed = 1;

    double target_mean(double age) const { return mean_base + mean_slope * age; }
    double target_std(double age) const { return std::max(std_base - std_slope * age, std_floor); }

    /// Throws ConfigError naming the offending key.
    void validate() const {
        auto bad = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
        if (n_train == 0 && n_test == 0) bad("n_train", "train and test sets are both empty");
        if (age_min < 0 || age_max > 99 || age_min > age_max) bad("age_min", "age range must lie within [0, 99]");
        if (!(std_floor > 0)) bad("std_floor", "must be > 0 (got " + std::to_string(std_floor) + ")");
        if (!(std_base >= std_floor)) bad("std_base", "must be >= std_floor");
        if (!(mean_slope > 0)) bad("mean_slope", "must be > 0");
        if (!(std_slope > 0)) bad("std_slope", "must be > 0");
        if (texture_freq_gain < 0) bad("texture_freq_gain", "must be >= 0");
        if (!(texture_base_freq > 0)) bad("texture_base_freq", "must be > 0");
        if (texture_amp < 0) bad("texture_amp", "must be >= 0");
        if (field_grid < 1) bad("field_grid", "must be >= 1");
        if (image_size < 8) bad("image_size", "must be >= 8");
        if (channels < 1) bad("channels", "must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"n_train", n_train},           {"n_test", n_test},
                {"age_min", age_min},           {"age_max", age_max},
                {"mean_base", mean_base},       {"mean_slope", mean_slope},
                {"std_base", std_base},         {"std_slope", std_slope},
                {"std_floor", std_floor},       {"texture_freq_gain", texture_freq_gain},
                {"texture_base_freq", texture_base_freq}, {"texture_amp", texture_amp},
                {"field_grid", field_grid},     {"image_size", image_size},
                {"channels", channels},         {"seed", seed}};
    }
};

enum class Split : std::uint64_t { train = 0, test = 1 };

namespace detail {

/// Bilinear upsampling of a (g+1) x (g+1) grid of normals to S x S.
inline void smooth_field(std::size_t grid, std::size_t S, nn::Rng& rng, double* out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t G = grid + 1;
    std::vector<double> knots(G * G);
    for (auto& k : knots) k = normal(rng);
    for (std::size_t y = 0; y < S; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) / S * grid;
        const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(fy), grid - 1);
        const double wy = fy - y0;
        for (std::size_t x = 0; x < S; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) / S * grid;
            const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(fx), grid - 1);
            const double wx = fx - x0;
            out[y * S + x] = (1 - wy) * ((1 - wx) * knots[y0 * G + x0] + wx * knots[y0 * G + x0 + 1]) +
                             wy * ((1 - wx) * knots[(y0 + 1) * G + x0] + wx * knots[(y0 + 1) * G + x0 + 1]);
        }
    }
}

}  // namespace detail

/// Pure function of (spec, split, index).
inline Sample synth_sample(const SyntheticSpec& spec, Split split, std::uint64_t index) {
    nn::Rng rng(nn::derive_seed(spec.seed, static_cast<std::uint64_t>(split), index));
    const std::size_t S = spec.image_size, C = spec.channels, plane = S * S;
    Sample s;
    s.index = index;
    s.age = std::uniform_int_distribution<int>(spec.age_min, spec.age_max)(rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double theta = unit(rng) * std::numbers::pi;
    const double phase = unit(rng) * 2 * std::numbers::pi;
    const double freq = spec.texture_base_freq * (1 + spec.texture_freq_gain * s.age);
    const double kx = 2 * std::numbers::pi * freq * std::cos(theta) / S;
    const double ky = 2 * std::numbers::pi * freq * std::sin(theta) / S;

    std::vector<double> img(C * plane);
    for (std::size_t c = 0; c < C; ++c) detail::smooth_field(spec.field_grid, S, rng, img.data() + c * plane);
    for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
            const double tex = spec.texture_amp * std::sin(kx * x + ky * y + phase);
            for (std::size_t c = 0; c < C; ++c) img[c * plane + y * S + x] += tex;
        }

    double mean = 0, var = 0;
    for (double v : img) mean += v;
    mean /= img.size();
    for (double v : img) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / img.size());
    const double gain = spec.target_std(s.age) / sd, shift = spec.target_mean(s.age);

    s.image = nn::Tensor<float>(nn::Shape{C, S, S});
    for (std::size_t i = 0; i < img.size(); ++i) s.image[i] = static_cast<float>((img[i] - mean) * gain + shift);
    return s;
}

inline Dataset synth_split(const SyntheticSpec& spec, Split split) {
    spec.validate();
    Dataset d;
    d.image_shape = {spec.channels, spec.image_size, spec.image_size};
    d.meta = {{"generator", "synthetic-aging-texture"},
              {"split", split == Split::train ? "train" : "test"},
              {"spec", spec.to_json()}};
    const std::size_t n = split == Split::train ? spec.n_train : spec.n_test;
    d.samples.resize(n);
    nn::parallel_for(n, [&](std::size_t i) { d.samples[i] = synth_sample(spec, split, i); });
    return d;
}

struct SyntheticSplits {
    Dataset train;
    Dataset test;
};

inline SyntheticSplits gen_synthetic(const SyntheticSpec& spec) {
    return {synth_split(spec, Split::train), synth_split(spec, Split::test)};
}

/// Global mean and population std of one image.
inline std::pair<double, double> image_stats(const nn::Tensor<float>& img) {
    double m = 0, v = 0;
    for (float x : img.data()) m += x;
    m /= img.numel();
    for (float x : img.data()) v += (x - m) * (x - m);
    return {m, std::sqrt(v / img.numel())};
}

}  // namespace daa::data
