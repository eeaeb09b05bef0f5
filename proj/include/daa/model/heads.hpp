#pragma once

#include <array>
#include <numeric>
#include <span>
#include <string>

#include "daa/model/binary_code.hpp"
#include "daa/model/daa_ops.hpp"
#include "daa/nn.hpp"

namespace daa::model {

/// Three fully connected layers over the normalized age codes; ReLU after the
/// first two, identity after the last. Row y of the output is (s_y, t_y).
template <class T>
class BinaryMapping {
public:
    BinaryMapping() = default;
    BinaryMapping(std::array<std::size_t, 3> widths, nn::Rng& rng) : widths_(widths) {
        if (widths[2] != 2) throw ConfigError("the last mapping layer must have exactly 2 outputs (s, t)");
        std::size_t in = kCodeBits;
        for (std::size_t i = 0; i < 3; ++i) {
            const std::string p = "mapping.fc" + std::to_string(i);
            w_[i] = nn::Var<T>::param(nn::he_normal<T>({widths[i], in}, in, rng));
            b_[i] = nn::Var<T>::param(nn::Tensor<T>(nn::Shape{widths[i]}));
            params_.add(p + ".weight", w_[i]);
            params_.add(p + ".bias", b_[i]);
            in = widths[i];
        }
    }

    const nn::ParameterSet<T>& parameters() const { return params_; }
    const std::array<std::size_t, 3>& widths() const { return widths_; }

    /// 100 x 8 -> 100 x 2
    nn::Var<T> forward(const nn::Var<T>& codes) const {
        auto z = nn::relu(nn::linear(codes, w_[0], b_[0]));
        z = nn::relu(nn::linear(z, w_[1], b_[1]));
        return nn::linear(z, w_[2], b_[2]);
    }

    StyleTable<T> table(const nn::Var<T>& codes) const {
        auto z = forward(codes);
        return {nn::column(z, 0), nn::column(z, 1)};
    }

    // test access
    nn::Var<T>& weight(std::size_t i) { return w_.at(i); }
    nn::Var<T>& bias(std::size_t i) { return b_.at(i); }

private:
    std::array<std::size_t, 3> widths_{16, 32, 2};
    std::array<nn::Var<T>, 3> w_, b_;
    nn::ParameterSet<T> params_;
};

/// Conv(3x3, pad 1) -> ReLU -> global average pool -> FC to one delta age.
/// One head is shared by every style-age slice.
template <class T>
class DecoderHead {
public:
    DecoderHead() = default;
    DecoderHead(std::size_t in_channels, std::size_t hidden, nn::Rng& rng) {
        conv_w_ = nn::Var<T>::param(nn::he_normal<T>({hidden, in_channels, 3, 3}, in_channels * 9, rng));
        conv_b_ = nn::Var<T>::param(nn::Tensor<T>(nn::Shape{hidden}));
        fc_w_ = nn::Var<T>::param(nn::he_normal<T>({1, hidden}, hidden, rng));
        fc_b_ = nn::Var<T>::param(nn::Tensor<T>(nn::Shape{1}));
        params_.add("head.conv.weight", conv_w_);
        params_.add("head.conv.bias", conv_b_);
        params_.add("head.fc.weight", fc_w_);
        params_.add("head.fc.bias", fc_b_);
    }

    const nn::ParameterSet<T>& parameters() const { return params_; }
    const nn::Var<T>& conv_weight() const { return conv_w_; }
    const nn::Var<T>& conv_bias() const { return conv_b_; }
    std::size_t hidden() const { return conv_w_.shape()[0]; }

    /// K x C x h x w -> K
    nn::Var<T> deltas(const nn::Var<T>& slices) const {
        const auto pre = nn::conv2d(slices, conv_w_, conv_b_, 1, 1);
        const auto& s = pre.shape();
        return from_preactivation(pre, s[0], s[2] * s[3]);
    }

    /// Remaining head layers given conv outputs (bias included), laid out as
    /// B contiguous blocks of hidden x spatial values -> B
    nn::Var<T> from_preactivation(const nn::Var<T>& pre, std::size_t batch, std::size_t spatial) const {
        auto pooled = nn::relu_group_mean(pre, spatial, {batch, hidden()});
        auto out = nn::linear(pooled, fc_w_, fc_b_);
        return nn::reshape(out, {batch});
    }

private:
    nn::Var<T> conv_w_, conv_b_, fc_w_, fc_b_;
    nn::ParameterSet<T> params_;
};

/// mean(ages) - mean(deltas): the age prediction from style ages and the
/// decoder's delta ages (each delta estimates style_age - true_age).
inline double aggregate_prediction(std::span<const std::size_t> ages, std::span<const double> deltas) {
    if (ages.empty() || ages.size() != deltas.size()) throw DimensionError("ages and deltas must be non-empty and equal length");
    const double mean_age = std::accumulate(ages.begin(), ages.end(), 0.0) / static_cast<double>(ages.size());
    const double mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
    return mean_age - mean_delta;
}

inline double mean_style_age(std::span<const std::size_t> ages) {
    return std::accumulate(ages.begin(), ages.end(), 0.0) / static_cast<double>(ages.size());
}

template <class T>
struct Decoded {
    nn::Var<T> x_pred;  // [1]
    nn::Var<T> deltas;  // K
    std::vector<std::size_t> ages;
};

template <class T>
Decoded<T> decode_age(const DeltaStack<T>& stack, const DecoderHead<T>& head) {
    if (stack.ages.empty()) throw ContractError("empty delta stack");
    auto d = head.deltas(stack.deltas);
    const T center = static_cast<T>(mean_style_age(stack.ages));
    return {nn::affine_scalar(nn::mean(d), T{-1}, center), d, stack.ages};
}

}  // namespace daa::model
