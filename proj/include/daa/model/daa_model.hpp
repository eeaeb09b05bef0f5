#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daa/model/binary_code.hpp"
#include "daa/model/daa_ops.hpp"
#include "daa/model/encoder.hpp"
#include "daa/model/heads.hpp"
#include "daa/nn.hpp"

namespace daa::model {

/// Which comparison statistics feed the delta stack. `none` regresses the
/// encoder output directly.
enum class DaaMode { none, single_template, multi_template, binary };

inline std::string to_string(DaaMode m) {
    switch (m) {
        case DaaMode::none: return "none";
        case DaaMode::single_template: return "single-template";
        case DaaMode::multi_template: return "multi-template";
        case DaaMode::binary: return "binary";
    }
    return "?";
}

inline DaaMode daa_mode_from_string(const std::string& s) {
    if (s == "none") return DaaMode::none;
    if (s == "single-template" || s == "single") return DaaMode::single_template;
    if (s == "multi-template" || s == "multi") return DaaMode::multi_template;
    if (s == "binary") return DaaMode::binary;
    throw ConfigError("unknown daa mode '" + s + "' (none | single-template | multi-template | binary)");
}

inline bool uses_templates(DaaMode m) { return m == DaaMode::single_template || m == DaaMode::multi_template; }

struct ModelConfig {
    EncoderConfig encoder = EncoderConfig::preset(EncoderVariant::tiny);
    DaaMode mode = DaaMode::binary;
    std::size_t head_channels = 64;
    std::array<std::size_t, 3> mlp_widths{16, 32, 2};
    CodeNorm code_norm = CodeNorm::column_standardize;
    double eps = nn::kStatEps;

    nlohmann::json to_json() const {
        return {{"encoder", encoder.to_json()},
                {"mode", to_string(mode)},
                {"head_channels", head_channels},
                {"mlp_widths", mlp_widths},
                {"code_norm", to_string(code_norm)},
                {"eps", eps}};
    }
    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.encoder = EncoderConfig::from_json(j.at("encoder"));
        c.mode = daa_mode_from_string(j.at("mode").get<std::string>());
        c.head_channels = j.at("head_channels").get<std::size_t>();
        c.mlp_widths = j.at("mlp_widths").get<std::array<std::size_t, 3>>();
        c.code_norm = code_norm_from_string(j.at("code_norm").get<std::string>());
        c.eps = j.at("eps").get<double>();
        return c;
    }
};

/// Scalar result of the reference (materialized stack) route.
struct AgeEstimate {
    double age = 0.0;
    std::vector<double> deltas;
    std::vector<std::size_t> ages;
};

template <class T>
class DaaModel {
public:
    DaaModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        nn::Rng rng(nn::derive_seed(seed, 0x6d6f64656cull));
        encoder_ = Encoder<T>(cfg_.encoder, rng);
        if (cfg_.mode == DaaMode::binary) {
            mapping_ = BinaryMapping<T>(cfg_.mlp_widths, rng);
            codes_ = nn::Var<T>::constant(build_code_matrix(cfg_.code_norm).normalized.template cast<T>());
        }
        head_ = DecoderHead<T>(cfg_.encoder.out_channels(), cfg_.head_channels, rng);
        params_.extend(encoder_.parameters());
        if (mapping_) params_.extend(mapping_->parameters());
        params_.extend(head_.parameters());
    }

    const ModelConfig& config() const { return cfg_; }
    nn::ParameterSet<T>& parameters() { return params_; }
    const Encoder<T>& encoder() const { return encoder_; }
    const DecoderHead<T>& head() const { return head_; }
    const BinaryMapping<T>* mapping() const { return mapping_ ? &*mapping_ : nullptr; }
    BinaryMapping<T>* mapping() { return mapping_ ? &*mapping_ : nullptr; }
    T eps() const { return static_cast<T>(cfg_.eps); }

    // ---------------------------------------------------------- templates

    void set_template_stats(TemplateStats<T> st) {
        if (!uses_templates(cfg_.mode)) throw ContractError("model mode " + to_string(cfg_.mode) + " takes no templates");
        const auto want = cfg_.mode == DaaMode::single_template ? TemplateMode::single : TemplateMode::multi;
        if (st.mode != want) throw ContractError("template statistics mode does not match model mode");
        templates_ = std::move(st);
    }
    const std::optional<TemplateStats<T>>& template_stats() const { return templates_; }

    /// Encodes one image per style age (no gradient) and stores their statistics.
    void refresh_templates(const std::map<int, nn::Tensor<T>>& images) {
        nn::NoGradGuard ng;
        std::map<int, FeatureMap<T>> feats;
        for (const auto& [age, img] : images) feats.emplace(age, encode_face(img));
        set_template_stats(daa_template_stats(feats,
                                              cfg_.mode == DaaMode::single_template ? TemplateMode::single
                                                                                    : TemplateMode::multi,
                                              eps()));
    }

    // ------------------------------------------------------------- pieces

    /// 3 x H x W -> feature map with channel statistics.
    FeatureMap<T> encode_face(const nn::Var<T>& image) const {
        const auto& s = image.shape();
        if (s.size() != 3) throw DimensionError("encode_face expects 3 x H x W, got " + nn::to_string(s));
        auto E = encoder_.forward(nn::reshape(image, {1, s[0], s[1], s[2]}));
        const auto& es = E.shape();
        return make_feature_map(nn::reshape(E, {es[1], es[2], es[3]}), eps());
    }
    FeatureMap<T> encode_face(const nn::Tensor<T>& image) const { return encode_face(nn::Var<T>::constant(image)); }

    /// Style table from the mapping MLP (differentiable w.r.t. its weights).
    StyleTable<T> style_table() const {
        if (!mapping_) throw ContractError("model mode " + to_string(cfg_.mode) + " has no style table");
        return mapping_->table(codes_);
    }

    /// Style table evaluated once, detached; enough for inference.
    StyleTable<T> frozen_style_table() const {
        nn::NoGradGuard ng;
        auto t = style_table();
        return {nn::Var<T>::constant(t.s.value()), nn::Var<T>::constant(t.t.value())};
    }

    DeltaStack<T> delta_stack(const FeatureMap<T>& fm, std::size_t interval,
                              const StyleTable<T>* table = nullptr) const {
        switch (cfg_.mode) {
            case DaaMode::binary:
                return build_delta_stack(fm, table ? *table : style_table(), interval);
            case DaaMode::single_template:
            case DaaMode::multi_template:
                return build_template_delta_stack(fm, require_templates(), interval);
            case DaaMode::none: break;
        }
        throw ContractError("mode none builds no delta stack");
    }

    // ------------------------------------------------------------ forward

    /// Reference route for one image: encode, materialize the delta stack at
    /// `interval`, decode. Differentiable; for mode none the interval is unused.
    Decoded<T> forward_full(const nn::Var<T>& image, std::size_t interval,
                            const StyleTable<T>* table = nullptr) const {
        auto fm = encode_face(image);
        if (cfg_.mode == DaaMode::none) {
            const auto& s = fm.E.shape();
            auto d = head_.deltas(nn::reshape(fm.E, {1, s[0], s[1], s[2]}));
            return {nn::affine_scalar(d, T{-1}, center()), d, {}};
        }
        return decode_age(delta_stack(fm, interval, table), head_);
    }

    AgeEstimate predict(const nn::Tensor<T>& image, std::size_t interval, const StyleTable<T>* table = nullptr) const {
        nn::NoGradGuard ng;
        auto d = forward_full(nn::Var<T>::constant(image), interval, table);
        AgeEstimate r;
        r.age = static_cast<double>(d.x_pred.item());
        for (auto v : d.deltas.value().data()) r.deltas.push_back(static_cast<double>(v));
        r.ages = d.ages;
        return r;
    }

    /// Batched route over N x 3 x H x W images. Because the decoder
    /// convolution is linear and every slice is an affine per-channel
    /// rescaling of the same normalized feature, conv(delta_y) expands to
    ///   sum_c sigma_yc conv_c(n) + sum_c mu_yc conv_c(1) - conv(E) + bias,
    /// so all K slices come from a handful of convolutions. Mathematically
    /// identical to forward_full; this is the route used for training.
    nn::Var<T> predict_batch(const nn::Var<T>& images, std::size_t interval = 1) const {
        return predict_from_features(encoder_.forward(images), interval);
    }

    /// Same as predict_batch given encoder output E (N x C x h x w).
    nn::Var<T> predict_from_features(const nn::Var<T>& E, std::size_t interval = 1) const {
        const auto& es = E.shape();
        if (es.size() != 4) throw DimensionError("features must be N x C x h x w, got " + nn::to_string(es));
        const std::size_t N = es[0], C = es[1], h = es[2], w = es[3];
        if (cfg_.mode == DaaMode::none) return nn::affine_scalar(head_.deltas(E), T{-1}, center());

        const auto ages = style_ages(interval);
        const std::size_t K = ages.size();
        const auto& W = head_.conv_weight();
        const std::size_t O = W.shape()[0], M = O * h * w;
        auto st = nn::channel_stats(E, eps());
        auto normalized = nn::standardize(E, st.mu, st.sigma);
        auto base = nn::reshape(nn::conv2d(nn::neg(E), W, head_.conv_bias(), 1, 1), {N, M});
        auto ones = nn::Var<T>::constant(nn::Tensor<T>::ones({1, C, h, w}));
        auto rows = [&](const nn::Var<T>& table) {
            return K == static_cast<std::size_t>(kNumStyleAges) ? table : nn::take_rows(table, ages);
        };

        std::vector<nn::MixTerm<T>> terms;
        if (cfg_.mode == DaaMode::single_template) {
            const auto& tpl = require_templates();
            terms.push_back({rows(nn::Var<T>::constant(tpl.sigma)),
                             nn::reshape(nn::conv2d_split(normalized, W, 1, 1), {N, C, M})});
            terms.push_back({rows(nn::Var<T>::constant(tpl.mu)),
                             nn::reshape(nn::conv2d_split(ones, W, 1, 1), {1, C, M})});
        } else {
            nn::Var<T> s, t;
            if (cfg_.mode == DaaMode::binary) {
                auto table = style_table();
                s = table.s;
                t = table.t;
            } else {
                const auto& tpl = require_templates();
                s = nn::Var<T>::constant(tpl.sigma);
                t = nn::Var<T>::constant(tpl.mu);
            }
            terms.push_back({nn::reshape(rows(s), {K, 1}),
                             nn::reshape(nn::conv2d(normalized, W, nn::Var<T>{}, 1, 1), {N, 1, M})});
            terms.push_back({nn::reshape(rows(t), {K, 1}),
                             nn::reshape(nn::conv2d(ones, W, nn::Var<T>{}, 1, 1), {1, 1, M})});
        }
        auto pre = nn::mix_styles(terms, base);  // N x K x (O h w)
        auto deltas = nn::reshape(head_.from_preactivation(pre, N * K, h * w), {N, K});
        return nn::affine_scalar(nn::row_mean(deltas), T{-1}, static_cast<T>(mean_style_age(ages)));
    }

    // ------------------------------------------------------ serialization

    std::vector<nn::NamedTensor<T>> named_tensors() const {
        std::vector<nn::NamedTensor<T>> out;
        for (const auto& p : params_.items()) out.push_back({p.name, p.var.value()});
        if (templates_) {
            out.push_back({"templates.mu", templates_->mu});
            out.push_back({"templates.sigma", templates_->sigma});
        }
        return out;
    }

    void save(const std::filesystem::path& path) const {
        nn::save_weights(path, named_tensors(), nlohmann::json{{"model", cfg_.to_json()}});
    }

    static DaaModel load(const std::filesystem::path& path) {
        auto wf = nn::load_weights<T>(path);
        if (!wf.arch.contains("model")) throw FormatError(path.string() + ": missing model architecture descriptor");
        ModelConfig cfg;
        try {
            cfg = ModelConfig::from_json(wf.arch.at("model"));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ": bad architecture descriptor: " + e.what());
        }
        DaaModel m(cfg, 0);
        std::size_t matched = 0;
        for (auto& p : m.params_.items()) {
            const auto& t = wf.get(p.name);
            if (t.shape() != p.var.shape())
                throw FormatError("tensor '" + p.name + "' has shape " + nn::to_string(t.shape()) +
                                  ", architecture expects " + nn::to_string(p.var.shape()));
            nn::Var<T> v = p.var;
            v.mutable_value() = t;
            ++matched;
        }
        if (uses_templates(cfg.mode)) {
            TemplateStats<T> st;
            st.mode = cfg.mode == DaaMode::single_template ? TemplateMode::single : TemplateMode::multi;
            st.mu = wf.get("templates.mu");
            st.sigma = wf.get("templates.sigma");
            m.set_template_stats(std::move(st));
            matched += 2;
        }
        if (matched != wf.tensors.size())
            throw FormatError(path.string() + ": weight file holds " + std::to_string(wf.tensors.size()) +
                              " tensors, architecture uses " + std::to_string(matched));
        return m;
    }

private:
    static T center() { return static_cast<T>(mean_style_age(style_ages(1))); }
    const TemplateStats<T>& require_templates() const {
        if (!templates_) throw ContractError("template statistics have not been computed");
        return *templates_;
    }

    ModelConfig cfg_;
    Encoder<T> encoder_;
    std::optional<BinaryMapping<T>> mapping_;
    DecoderHead<T> head_;
    nn::Var<T> codes_;
    std::optional<TemplateStats<T>> templates_;
    nn::ParameterSet<T> params_;
};

}  // namespace daa::model
