#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daa/train/trainer.hpp"

namespace daa::train {

/// Value as printed with 6 significant digits, parsed back.
inline double round6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

inline std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline double mean_absolute_error(std::span<const double> pred, std::span<const double> truth) {
    if (pred.empty()) throw ContractError("cannot evaluate an empty prediction set");
    if (pred.size() != truth.size()) throw DimensionError("prediction and label counts differ");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

/// Percentage of samples whose absolute error is strictly below n.
inline double cumulative_accuracy(std::span<const double> pred, std::span<const double> truth, double n) {
    if (pred.empty()) throw ContractError("cannot evaluate an empty prediction set");
    if (pred.size() != truth.size()) throw DimensionError("prediction and label counts differ");
    if (n < 0) throw RangeError("CA threshold must be >= 0");
    std::size_t k = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) k += std::abs(pred[i] - truth[i]) < n;
    return 100.0 * static_cast<double>(k) / static_cast<double>(pred.size());
}

inline const std::vector<int>& ca_thresholds() {
    static const std::vector<int> t{3, 5, 7};
    return t;
}

struct IntervalResult {
    std::size_t interval = 1;
    double mae = 0;
    std::map<int, double> ca;  // n -> percentage
};

struct EvalReport {
    std::string mode;
    std::size_t n_samples = 0;
    std::vector<IntervalResult> results;
    std::map<std::string, double> timings_ms;  // wall clock, excluded from the deterministic JSON

    const IntervalResult& at(std::size_t interval) const {
        for (const auto& r : results)
            if (r.interval == interval) return r;
        throw ContractError("no result for interval " + std::to_string(interval));
    }

    nlohmann::json to_json(bool with_timings = false) const {
        nlohmann::json j{{"mode", mode}, {"n_samples", n_samples}};
        auto& arr = j["results"] = nlohmann::json::array();
        for (const auto& r : results) {
            nlohmann::json ca;
            for (const auto& [n, v] : r.ca) ca[std::to_string(n)] = round6(v);
            arr.push_back({{"interval", r.interval}, {"mae", round6(r.mae)}, {"ca", ca}});
        }
        if (with_timings) {
            nlohmann::json t;
            for (const auto& [k, v] : timings_ms) t[k] = round6(v);
            j["timings_ms"] = t;
        }
        return j;
    }
};

struct Predictions {
    std::vector<double> truth;
    std::map<std::size_t, std::vector<double>> by_interval;
    std::map<std::string, double> timings_ms;
};

/// Encodes each batch once and decodes it at every requested interval.
inline Predictions predict_dataset(const Model& m, const data::Dataset& d, const std::vector<std::size_t>& intervals,
                                   std::size_t batch_size = 32) {
    if (d.empty()) throw ContractError("cannot evaluate on an empty dataset");
    nn::NoGradGuard ng;
    using clock = std::chrono::steady_clock;
    Predictions p;
    double encode_ms = 0;
    std::map<std::size_t, double> decode_ms;
    for (std::size_t b0 = 0; b0 < d.size(); b0 += batch_size) {
        const std::size_t b1 = std::min(d.size(), b0 + batch_size);
        std::vector<const nn::Tensor<float>*> imgs;
        for (std::size_t i = b0; i < b1; ++i) {
            imgs.push_back(&d.samples[i].image);
            p.truth.push_back(d.samples[i].age);
        }
        auto t0 = clock::now();
        auto E = m.encoder().forward(nn::Var<float>::constant(make_batch(imgs)));
        encode_ms += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        for (auto interval : intervals) {
            t0 = clock::now();
            auto pred = m.predict_from_features(E, interval);
            decode_ms[interval] += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            auto& out = p.by_interval[interval];
            for (auto v : pred.value().data()) out.push_back(static_cast<double>(v));
        }
    }
    p.timings_ms["encode"] = encode_ms;
    for (const auto& [k, v] : decode_ms) p.timings_ms["daa_decode_interval_" + std::to_string(k)] = v;
    return p;
}

inline EvalReport evaluate(const Model& m, const data::Dataset& d, const std::vector<std::size_t>& intervals) {
    auto p = predict_dataset(m, d, intervals);
    EvalReport r;
    r.mode = model::to_string(m.config().mode);
    r.n_samples = d.size();
    r.timings_ms = p.timings_ms;
    for (auto interval : intervals) {
        const auto& pred = p.by_interval.at(interval);
        IntervalResult ir;
        ir.interval = interval;
        ir.mae = mean_absolute_error(pred, p.truth);
        for (int n : ca_thresholds()) ir.ca[n] = cumulative_accuracy(pred, p.truth, n);
        r.results.push_back(ir);
    }
    return r;
}

inline double evaluate_mae(const Model& m, const data::Dataset& d, std::size_t interval = 1) {
    return evaluate(m, d, {interval}).results.front().mae;
}

inline double evaluate_ca(const Model& m, const data::Dataset& d, double n, std::size_t interval = 1) {
    auto p = predict_dataset(m, d, {interval});
    return cumulative_accuracy(p.by_interval.at(interval), p.truth, n);
}

}  // namespace daa::train
