#pragma once

// Delta Age AdaIN transfers. Every variant produces, per channel c,
//     (target_std - sigma_c) * (E_c - mu_c) / sigma_c + target_mean - mu_c
// and differs only in where the target statistics come from.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "daa/model/binary_code.hpp"
#include "daa/nn.hpp"

namespace daa::model {

/// Encoder output for one image plus its channel statistics.
template <class T>
struct FeatureMap {
    nn::Var<T> E;      // C x h x w
    nn::Var<T> mu;     // C
    nn::Var<T> sigma;  // C
    std::optional<double> age;

    std::size_t channels() const { return E.shape()[0]; }
};

template <class T>
FeatureMap<T> make_feature_map(const nn::Var<T>& E, T eps = static_cast<T>(nn::kStatEps),
                               std::optional<double> age = std::nullopt) {
    if (E.shape().size() != 3) throw DimensionError("feature map must be C x h x w, got " + nn::to_string(E.shape()));
    auto s = nn::channel_stats(E, eps);
    return {E, s.mu, s.sigma, age};
}

namespace detail {

template <class T>
void check_target(const FeatureMap<T>& x, const nn::Var<T>& mu_y, const nn::Var<T>& sigma_y) {
    const auto C = x.channels();
    if (mu_y.numel() != C || sigma_y.numel() != C)
        throw DimensionError("target statistics must have " + std::to_string(C) + " entries, got " +
                             std::to_string(mu_y.numel()) + " / " + std::to_string(sigma_y.numel()));
}

template <class T>
nn::Var<T> delta_from_normalized(const nn::Var<T>& normalized, const FeatureMap<T>& x, const nn::Var<T>& mu_y,
                                 const nn::Var<T>& sigma_y) {
    return nn::group_affine(normalized, nn::sub(sigma_y, x.sigma), nn::sub(mu_y, x.mu));
}

}  // namespace detail

/// sigma_y * (E - mu) / sigma + mu_y
template <class T>
nn::Var<T> adain(const FeatureMap<T>& x, const nn::Var<T>& mu_y, const nn::Var<T>& sigma_y) {
    detail::check_target(x, mu_y, sigma_y);
    return nn::group_affine(nn::standardize(x.E, x.mu, x.sigma), sigma_y, mu_y);
}

/// Per-channel target statistics.
template <class T>
nn::Var<T> daa_single(const FeatureMap<T>& x, const nn::Var<T>& mu_y, const nn::Var<T>& sigma_y) {
    detail::check_target(x, mu_y, sigma_y);
    return detail::delta_from_normalized(nn::standardize(x.E, x.mu, x.sigma), x, mu_y, sigma_y);
}

/// One scalar (mean, std) pair shared by every channel.
template <class T>
nn::Var<T> daa_multi(const FeatureMap<T>& x, const nn::Var<T>& mu_g, const nn::Var<T>& sigma_g) {
    const nn::Shape c{x.channels()};
    return daa_single(x, nn::expand_scalar(mu_g, c), nn::expand_scalar(sigma_g, c));
}

/// Learned style pair: s plays the std role, t the mean role.
template <class T>
nn::Var<T> daa_binary(const FeatureMap<T>& x, const nn::Var<T>& s_y, const nn::Var<T>& t_y) {
    return daa_multi(x, t_y, s_y);
}

/// Learned per-age style statistics (S: std role, T: mean role), 100 each.
template <class T>
struct StyleTable {
    nn::Var<T> s;
    nn::Var<T> t;
};

/// Style ages [0, d, 2d, ...] for an interval d dividing 100.
inline std::vector<std::size_t> style_ages(std::size_t interval) {
    if (interval == 0 || kNumStyleAges % interval != 0)
        throw ConfigError("style interval " + std::to_string(interval) + " does not divide 100");
    std::vector<std::size_t> ages;
    for (std::size_t a = 0; a < static_cast<std::size_t>(kNumStyleAges); a += interval) ages.push_back(a);
    return ages;
}

template <class T>
struct DeltaStack {
    nn::Var<T> deltas;  // K x C x h x w
    std::vector<std::size_t> ages;
};

template <class T>
DeltaStack<T> build_delta_stack(const FeatureMap<T>& x, const StyleTable<T>& table, std::size_t interval) {
    if (table.s.numel() != kNumStyleAges || table.t.numel() != kNumStyleAges)
        throw DimensionError("style table must hold 100 (s, t) pairs");
    auto ages = style_ages(interval);
    const nn::Shape c{x.channels()};
    auto normalized = nn::standardize(x.E, x.mu, x.sigma);
    std::vector<nn::Var<T>> slices;
    slices.reserve(ages.size());
    for (auto a : ages) {
        auto s = nn::expand_scalar(nn::take_rows(table.s, {a}), c);
        auto t = nn::expand_scalar(nn::take_rows(table.t, {a}), c);
        slices.push_back(detail::delta_from_normalized(normalized, x, t, s));
    }
    return {nn::stack(slices), std::move(ages)};
}

// ------------------------------------------------------------ template DAA

enum class TemplateMode { single, multi };

/// Statistics of one template image per style age, computed through the
/// current encoder. single: mu/sigma are 100 x C; multi: 100 scalars each.
template <class T>
struct TemplateStats {
    TemplateMode mode = TemplateMode::multi;
    nn::Tensor<T> mu;
    nn::Tensor<T> sigma;
};

template <class T>
TemplateStats<T> daa_template_stats(const std::map<int, FeatureMap<T>>& templates, TemplateMode mode,
                                    T eps = static_cast<T>(nn::kStatEps)) {
    if (templates.empty()) throw ContractError("no templates given");
    const std::size_t C = templates.begin()->second.channels();
    TemplateStats<T> st;
    st.mode = mode;
    const nn::Shape shape = mode == TemplateMode::single ? nn::Shape{kNumStyleAges, C} : nn::Shape{kNumStyleAges};
    st.mu = nn::Tensor<T>(shape);
    st.sigma = nn::Tensor<T>(shape);
    for (int y = 0; y < kNumStyleAges; ++y) {
        auto it = templates.find(y);
        if (it == templates.end()) throw ContractError("missing template for style age " + std::to_string(y));
        const auto& f = it->second;
        if (f.channels() != C) throw DimensionError("templates disagree on channel count");
        if (mode == TemplateMode::single) {
            for (std::size_t c = 0; c < C; ++c) {
                st.mu[y * C + c] = f.mu.value()[c];
                st.sigma[y * C + c] = f.sigma.value()[c];
            }
        } else {
            auto g = nn::global_stats(f.E, eps);
            st.mu[y] = g.mu.item();
            st.sigma[y] = g.sigma.item();
        }
    }
    return st;
}

template <class T>
DeltaStack<T> build_template_delta_stack(const FeatureMap<T>& x, const TemplateStats<T>& st, std::size_t interval) {
    auto ages = style_ages(interval);
    const std::size_t C = x.channels();
    if (st.mode == TemplateMode::single && st.mu.shape() != nn::Shape{kNumStyleAges, C})
        throw DimensionError("single-channel template statistics must be 100 x " + std::to_string(C));
    auto mu_all = nn::Var<T>::constant(st.mu);
    auto sigma_all = nn::Var<T>::constant(st.sigma);
    auto normalized = nn::standardize(x.E, x.mu, x.sigma);
    std::vector<nn::Var<T>> slices;
    for (auto a : ages) {
        nn::Var<T> mu_y, sigma_y;
        if (st.mode == TemplateMode::single) {
            mu_y = nn::reshape(nn::take_rows(mu_all, {a}), {C});
            sigma_y = nn::reshape(nn::take_rows(sigma_all, {a}), {C});
        } else {
            mu_y = nn::expand_scalar(nn::take_rows(mu_all, {a}), {C});
            sigma_y = nn::expand_scalar(nn::take_rows(sigma_all, {a}), {C});
        }
        slices.push_back(detail::delta_from_normalized(normalized, x, mu_y, sigma_y));
    }
    return {nn::stack(slices), std::move(ages)};
}

}  // namespace daa::model
