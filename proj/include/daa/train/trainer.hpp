#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daa/data/augment.hpp"
#include "daa/data/synthetic.hpp"
#include "daa/model/daa_model.hpp"
#include "daa/nn.hpp"

namespace daa::train {

using Model = model::DaaModel<float>;

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double base_lr = 1e-3;
    nn::AdamHyper adam{};  // beta1 doubles as the momentum term
    std::uint64_t seed = 1;
    model::ModelConfig model{};
    data::AugmentConfig augment{};
    std::vector<std::size_t> eval_intervals{1, 2, 5, 10, 20, 50};
    std::size_t template_draws = 3;
    std::size_t template_draw = 0;  // which draw this run uses

    void validate() const {
        if (batch_size == 0) throw ConfigError("batch_size: must be positive");
        if (!(base_lr > 0)) throw ConfigError("base_lr: must be positive");
        if (adam.weight_decay < 0) throw ConfigError("weight_decay: must be >= 0");
        if (!(adam.beta1 >= 0 && adam.beta1 < 1)) throw ConfigError("momentum: must lie in [0, 1)");
        if (!(adam.beta2 >= 0 && adam.beta2 < 1)) throw ConfigError("adam_beta2: must lie in [0, 1)");
        if (eval_intervals.empty()) throw ConfigError("eval_intervals: at least one interval required");
        for (auto d : eval_intervals) {
            try {
                model::style_ages(d);
            } catch (const ConfigError&) {
                throw ConfigError("eval_intervals: " + std::to_string(d) + " does not divide 100");
            }
        }
        if (template_draws == 0) throw ConfigError("template_draws: must be positive");
        augment.validate();
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0;
    double loss = 0;
    double seconds = 0;
};

struct TrainResult {
    Model model;
    std::vector<double> loss_history;  // mean sample loss per epoch
    double seconds = 0;
};

/// Stacks images into an N x C x H x W batch.
inline nn::Tensor<float> make_batch(const std::vector<const nn::Tensor<float>*>& images) {
    if (images.empty()) throw ContractError("empty batch");
    const auto& s = images.front()->shape();
    nn::Shape shape{images.size()};
    shape.insert(shape.end(), s.begin(), s.end());
    nn::Tensor<float> out(shape);
    const std::size_t per = images.front()->numel();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->shape() != s) throw DimensionError("batch images disagree on shape");
        std::copy(images[i]->data().begin(), images[i]->data().end(), out.data().begin() + i * per);
    }
    return out;
}

/// One training image per style age, drawn once with a seeded RNG. Ages that
/// are absent from the set borrow the sample whose age is nearest (lower
/// age on ties).
inline std::map<int, std::size_t> select_templates(const data::Dataset& train, std::uint64_t seed,
                                                   std::size_t draw = 0) {
    if (train.empty()) throw ContractError("cannot draw templates from an empty dataset");
    std::map<int, std::vector<std::size_t>> by_age;
    for (std::size_t i = 0; i < train.size(); ++i) by_age[train.samples[i].age].push_back(i);
    nn::Rng rng(nn::derive_seed(seed, 0x74706cull, draw));
    std::map<int, std::size_t> out;
    for (int y = 0; y < model::kNumStyleAges; ++y) {
        int best = -1;
        for (const auto& [age, _] : by_age)
            if (best < 0 || std::abs(age - y) < std::abs(best - y)) best = age;
        const auto& pool = by_age.at(best);
        out[y] = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    }
    return out;
}

inline void refresh_templates(Model& m, const data::Dataset& train, const std::map<int, std::size_t>& picks) {
    std::map<int, nn::Tensor<float>> images;
    for (const auto& [age, idx] : picks) images.emplace(age, train.samples[idx].image);
    m.refresh_templates(images);
}

inline nn::Tensor<float> age_targets(const std::vector<int>& ages) {
    nn::Tensor<float> t(nn::Shape{ages.size()});
    for (std::size_t i = 0; i < ages.size(); ++i) t[i] = static_cast<float>(ages[i]);
    return t;
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam on smooth-L1 with a per-epoch cosine learning rate. Every
/// source of randomness (init, shuffling, augmentation, templates) derives
/// from cfg.seed.
inline TrainResult train(const TrainConfig& cfg, const data::Dataset& train_set, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (train_set.empty()) throw ContractError("training set is empty");
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r{Model(cfg.model, cfg.seed), {}, 0};
    Model& m = r.model;
    auto& params = m.parameters();
    nn::AdamState<float> adam(params, cfg.adam);

    std::map<int, std::size_t> picks;
    if (model::uses_templates(cfg.model.mode)) picks = select_templates(train_set, cfg.seed, cfg.template_draw);

    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto te = std::chrono::steady_clock::now();
        const double lr = nn::cosine_lr(e, cfg.epochs, cfg.base_lr);
        if (!picks.empty()) refresh_templates(m, train_set, picks);

        std::iota(order.begin(), order.end(), std::size_t{0});
        nn::Rng shuffle(nn::derive_seed(cfg.seed, 0x73687566ull, e));
        std::shuffle(order.begin(), order.end(), shuffle);

        double loss_sum = 0;
        for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(n, b0 + cfg.batch_size);
            std::vector<data::Sample> aug(b1 - b0);
            nn::parallel_for(b1 - b0, [&](std::size_t i) {
                const auto& s = train_set.samples[order[b0 + i]];
                nn::Rng rng(nn::derive_seed(cfg.seed, 0x617567ull, e, s.index));
                aug[i] = data::augment(s, cfg.augment, rng);
            });
            std::vector<const nn::Tensor<float>*> imgs;
            std::vector<int> ages;
            for (const auto& s : aug) {
                imgs.push_back(&s.image);
                ages.push_back(s.age);
            }
            auto pred = m.predict_batch(nn::Var<float>::constant(make_batch(imgs)));
            auto loss = nn::smooth_l1(pred, age_targets(ages));
            if (!std::isfinite(loss.item()))
                throw NumericError("non-finite loss at epoch " + std::to_string(e) + ", batch starting at " +
                                   std::to_string(b0) + "; first non-finite tensor: " + nn::first_non_finite(loss));
            loss_sum += static_cast<double>(loss.item()) * static_cast<double>(b1 - b0);
            nn::backward(loss);
            for (const auto& p : params.items())
                if (!p.var.grad().all_finite())
                    throw NumericError("non-finite gradient in '" + p.name + "' at epoch " + std::to_string(e));
            nn::adam_step(params, adam, lr);
        }
        const double mean_loss = loss_sum / static_cast<double>(n);
        r.loss_history.push_back(mean_loss);
        if (on_epoch)
            on_epoch({e, lr, mean_loss, std::chrono::duration<double>(std::chrono::steady_clock::now() - te).count()});
    }
    if (!picks.empty()) refresh_templates(m, train_set, picks);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace daa::train
