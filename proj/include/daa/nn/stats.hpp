#pragma once

#include "daa/nn/ops.hpp"

namespace daa::nn {

/// Default variance regularizer inside both standard-deviation formulas.
inline constexpr double kStatEps = 1e-5;

template <class T>
struct MeanStd {
    Var<T> mu;
    Var<T> sigma;
};

/// Per-channel spatial mean and sqrt(population variance + eps).
/// C x h x w -> C, or N x C x h x w -> N x C.
template <class T>
MeanStd<T> channel_stats(const Var<T>& E, T eps = static_cast<T>(kStatEps)) {
    const auto& s = E.shape();
    if (s.size() != 3 && s.size() != 4)
        throw DimensionError("channel_stats expects C x h x w or N x C x h x w, got " + to_string(s));
    const std::size_t hw = s[s.size() - 2] * s[s.size() - 1];
    Shape out(s.begin(), s.end() - 2);
    return {group_mean(E, hw, out), group_std(E, hw, eps, out)};
}

/// Mean and sqrt(variance + eps) over all of C x h x w jointly.
/// C x h x w -> [1], or N x C x h x w -> [N].
template <class T>
MeanStd<T> global_stats(const Var<T>& E, T eps = static_cast<T>(kStatEps)) {
    const auto& s = E.shape();
    if (s.size() != 3 && s.size() != 4)
        throw DimensionError("global_stats expects C x h x w or N x C x h x w, got " + to_string(s));
    const std::size_t n = s.size() == 4 ? s[0] : 1;
    const std::size_t group = E.numel() / n;
    return {group_mean(E, group, Shape{n}), group_std(E, group, eps, Shape{n})};
}

}  // namespace daa::nn
