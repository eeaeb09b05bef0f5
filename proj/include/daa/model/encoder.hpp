#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daa/nn.hpp"

namespace daa::model {

enum class EncoderVariant { tiny, resnet18_like, c3ae_plain_like, custom };

inline std::string to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::tiny: return "tiny";
        case EncoderVariant::resnet18_like: return "resnet18-like";
        case EncoderVariant::c3ae_plain_like: return "c3ae-plain-like";
        case EncoderVariant::custom: return "custom";
    }
    return "?";
}

inline EncoderVariant encoder_variant_from_string(const std::string& s) {
    if (s == "tiny") return EncoderVariant::tiny;
    if (s == "resnet18-like") return EncoderVariant::resnet18_like;
    if (s == "c3ae-plain-like") return EncoderVariant::c3ae_plain_like;
    if (s == "custom") return EncoderVariant::custom;
    throw ConfigError("unknown encoder variant '" + s + "' (tiny | resnet18-like | c3ae-plain-like)");
}

/// One 3x3 conv + ReLU, or a basic residual block (conv-relu-conv + 1x1
/// projection shortcut, then ReLU) when `residual` is set.
struct BlockSpec {
    std::size_t out_channels;
    std::size_t stride;
    bool residual = false;

    friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::tiny;
    std::size_t in_channels = 3;
    std::size_t input_size = 128;
    std::vector<BlockSpec> blocks;

    std::size_t out_channels() const { return blocks.empty() ? in_channels : blocks.back().out_channels; }
    std::size_t out_size() const {
        std::size_t s = input_size;
        for (const auto& b : blocks) s = (s + 2 - 3) / b.stride + 1;
        return s;
    }

    /// tiny: 16 -> 32 -> 32 -> C, all stride 2 (128 -> 8).
    /// c3ae-plain-like: four stride-2 blocks of width C (32 by default).
    /// resnet18-like: stride-1 3x3 stem (no max pool), then four stride-2
    /// residual stages 64 -> 128 -> 256 -> C (512 by default).
    static EncoderConfig preset(EncoderVariant v, std::size_t channels = 0, std::size_t input_size = 128) {
        EncoderConfig c;
        c.variant = v;
        c.input_size = input_size;
        switch (v) {
            case EncoderVariant::tiny: {
                const std::size_t C = channels ? channels : 32;
                c.blocks = {{16, 2}, {32, 2}, {32, 2}, {C, 2}};
                break;
            }
            case EncoderVariant::c3ae_plain_like: {
                const std::size_t C = channels ? channels : 32;
                c.blocks = {{32, 2}, {32, 2}, {32, 2}, {C, 2}};
                break;
            }
            case EncoderVariant::resnet18_like: {
                const std::size_t C = channels ? channels : 512;
                c.blocks = {{64, 1}, {64, 2, true}, {128, 2, true}, {256, 2, true}, {C, 2, true}};
                break;
            }
            case EncoderVariant::custom:
                throw ConfigError("the custom encoder variant has no preset; list its blocks explicitly");
        }
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"variant", to_string(variant)}, {"in_channels", in_channels}, {"input_size", input_size}};
        auto& bl = j["blocks"] = nlohmann::json::array();
        for (const auto& b : blocks) bl.push_back({{"out", b.out_channels}, {"stride", b.stride}, {"residual", b.residual}});
        return j;
    }

    static EncoderConfig from_json(const nlohmann::json& j) {
        EncoderConfig c;
        c.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
        c.in_channels = j.at("in_channels").get<std::size_t>();
        c.input_size = j.at("input_size").get<std::size_t>();
        for (const auto& b : j.at("blocks"))
            c.blocks.push_back({b.at("out").get<std::size_t>(), b.at("stride").get<std::size_t>(),
                                b.at("residual").get<bool>()});
        return c;
    }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <class T>
class Encoder {
public:
    Encoder() = default;
    Encoder(EncoderConfig cfg, nn::Rng& rng) : cfg_(std::move(cfg)) {
        if (cfg_.blocks.empty()) throw ConfigError("encoder needs at least one block");
        std::size_t in = cfg_.in_channels;
        for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
            const auto& spec = cfg_.blocks[i];
            if (spec.out_channels == 0 || spec.stride == 0) throw ConfigError("encoder block widths and strides must be positive");
            Block b;
            const std::string p = "encoder.block" + std::to_string(i);
            b.w1 = conv_param(p + ".conv1.weight", spec.out_channels, in, 3, rng);
            b.b1 = bias_param(p + ".conv1.bias", spec.out_channels);
            if (spec.residual) {
                b.w2 = conv_param(p + ".conv2.weight", spec.out_channels, spec.out_channels, 3, rng);
                b.b2 = bias_param(p + ".conv2.bias", spec.out_channels);
                b.wp = conv_param(p + ".proj.weight", spec.out_channels, in, 1, rng);
                b.bp = bias_param(p + ".proj.bias", spec.out_channels);
            }
            blocks_.push_back(b);
            in = spec.out_channels;
        }
    }

    const EncoderConfig& config() const { return cfg_; }
    const nn::ParameterSet<T>& parameters() const { return params_; }

    /// N x in_channels x S x S -> N x C x h x w
    nn::Var<T> forward(const nn::Var<T>& x) const {
        const auto& s = x.shape();
        if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.input_size || s[3] != cfg_.input_size)
            throw DimensionError("encoder expects N x " + std::to_string(cfg_.in_channels) + " x " +
                                 std::to_string(cfg_.input_size) + " x " + std::to_string(cfg_.input_size) +
                                 ", got " + nn::to_string(s));
        nn::Var<T> h = x;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const auto& spec = cfg_.blocks[i];
            const auto& b = blocks_[i];
            nn::Var<T> y = nn::relu(nn::conv2d(h, b.w1, b.b1, spec.stride, 1));
            if (spec.residual) {
                y = nn::conv2d(y, b.w2, b.b2, 1, 1);
                y = nn::relu(nn::add(y, nn::conv2d(h, b.wp, b.bp, spec.stride, 0)));
            }
            h = y;
        }
        return h;
    }

private:
    struct Block {
        nn::Var<T> w1, b1, w2, b2, wp, bp;
    };

    nn::Var<T> conv_param(const std::string& name, std::size_t out, std::size_t in, std::size_t k, nn::Rng& rng) {
        auto v = nn::Var<T>::param(nn::he_normal<T>({out, in, k, k}, in * k * k, rng));
        params_.add(name, v);
        return v;
    }
    nn::Var<T> bias_param(const std::string& name, std::size_t out) {
        auto v = nn::Var<T>::param(nn::Tensor<T>(nn::Shape{out}));
        params_.add(name, v);
        return v;
    }

    EncoderConfig cfg_;
    std::vector<Block> blocks_;
    nn::ParameterSet<T> params_;
};

}  // namespace daa::model
