#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "daa/data/synthetic.hpp"

namespace daa::data {

struct AugmentConfig {
    bool enabled = true;
    double flip_prob = 0.5;
    double scale_min = 0.9;
    double scale_max = 1.1;
    double rotate_deg = 10.0;    // angle drawn from [-r, r]
    double translate_px = 8.0;   // each axis drawn from [-t, t]

    static AugmentConfig identity() { return {true, 0.0, 1.0, 1.0, 0.0, 0.0}; }

    void validate() const {
        if (flip_prob < 0 || flip_prob > 1) throw ConfigError("aug_flip_prob: must lie in [0, 1]");
        if (!(scale_min > 0) || scale_min > 1 || scale_max < 1)
            throw ConfigError("aug_scale_min/aug_scale_max: range must contain 1 and be positive");
        if (rotate_deg < 0) throw ConfigError("aug_rotate_deg: must be >= 0");
        if (translate_px < 0) throw ConfigError("aug_translate_px: must be >= 0");
    }
};

struct AffineParams {
    bool flip = false;
    double scale = 1.0;
    double angle_deg = 0.0;
    double tx = 0.0;
    double ty = 0.0;

    bool warp_is_identity() const { return scale == 1.0 && angle_deg == 0.0 && tx == 0.0 && ty == 0.0; }
};

inline AffineParams draw_affine(const AugmentConfig& cfg, nn::Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AffineParams p;
    p.flip = u(rng) < cfg.flip_prob;
    p.scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u(rng);
    p.angle_deg = cfg.rotate_deg * (2 * u(rng) - 1);
    p.tx = cfg.translate_px * (2 * u(rng) - 1);
    p.ty = cfg.translate_px * (2 * u(rng) - 1);
    return p;
}

inline nn::Tensor<float> hflip(const nn::Tensor<float>& img) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    nn::Tensor<float> out(img.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
    return out;
}

/// Scales by `scale` and rotates by `angle_deg` about the image center, then
/// translates by (tx, ty). Inverse-mapped bilinear sampling, borders clamped.
inline nn::Tensor<float> warp_affine(const nn::Tensor<float>& img, double scale, double angle_deg, double tx,
                                     double ty) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a) / scale, sa = std::sin(a) / scale;
    nn::Tensor<float> out(img.shape());
    auto at = [&](std::size_t c, long y, long x) {
        y = std::clamp<long>(y, 0, static_cast<long>(H) - 1);
        x = std::clamp<long>(x, 0, static_cast<long>(W) - 1);
        return static_cast<double>(img[(c * H + y) * W + x]);
    };
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const double dx = x - cx - tx, dy = y - cy - ty;
            const double sx = ca * dx + sa * dy + cx;
            const double sy = -sa * dx + ca * dy + cy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double wx = sx - fx, wy = sy - fy;
            const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
            for (std::size_t c = 0; c < C; ++c) {
                const double v = (1 - wy) * ((1 - wx) * at(c, y0, x0) + wx * at(c, y0, x0 + 1)) +
                                 wy * ((1 - wx) * at(c, y0 + 1, x0) + wx * at(c, y0 + 1, x0 + 1));
                out[(c * H + y) * W + x] = static_cast<float>(v);
            }
        }
    return out;
}

inline nn::Tensor<float> apply_affine(const nn::Tensor<float>& img, const AffineParams& p) {
    nn::Tensor<float> out = p.flip ? hflip(img) : img;
    if (!p.warp_is_identity()) out = warp_affine(out, p.scale, p.angle_deg, p.tx, p.ty);
    return out;
}

/// Flip with probability flip_prob, then one affine warp. Label untouched.
inline Sample augment(const Sample& s, const AugmentConfig& cfg, nn::Rng& rng) {
    if (!cfg.enabled) return s;
    if (s.image.rank() != 3) throw DimensionError("augment expects C x H x W, got " + nn::to_string(s.image.shape()));
    Sample out = s;
    out.image = apply_affine(s.image, draw_affine(cfg, rng));
    return out;
}

}  // namespace daa::data
