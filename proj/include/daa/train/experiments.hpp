#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "daa/train/evaluate.hpp"

namespace daa::train {

// ------------------------------------------------------------------ ablation

inline std::string ablation_label(model::DaaMode m) {
    switch (m) {
        case model::DaaMode::none: return "w/o DAA";
        case model::DaaMode::single_template: return "single channel";
        case model::DaaMode::multi_template: return "multi-channel";
        case model::DaaMode::binary: return "Binary mapping";
    }
    return "?";
}

struct AblationRun {
    std::uint64_t seed = 0;
    std::size_t template_draw = 0;
    double mae = 0;
    std::map<int, double> ca;
};

struct AblationRow {
    model::DaaMode mode{};
    std::vector<AblationRun> runs;
    double mae = 0;             // mean over runs
    std::map<int, double> ca;   // mean over runs
};

struct AblationTable {
    std::vector<AblationRow> rows;

    const AblationRow& row(model::DaaMode m) const {
        for (const auto& r : rows)
            if (r.mode == m) return r;
        throw ContractError("no ablation row for " + model::to_string(m));
    }

    nlohmann::json to_json() const {
        auto arr = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json ca, runs = nlohmann::json::array();
            for (const auto& [n, v] : r.ca) ca[std::to_string(n)] = round6(v);
            for (const auto& run : r.runs)
                runs.push_back({{"seed", run.seed}, {"template_draw", run.template_draw}, {"mae", round6(run.mae)}});
            arr.push_back({{"mode", model::to_string(r.mode)},
                           {"label", ablation_label(r.mode)},
                           {"mae", round6(r.mae)},
                           {"ca", ca},
                           {"runs", runs}});
        }
        return {{"rows", arr}};
    }
};

using RunCallback = std::function<void(model::DaaMode, const AblationRun&)>;

/// Trains and evaluates every DAA variant on the same data. Each seed gives
/// one run per row; template rows additionally repeat over
/// base.template_draws independent template draws.
inline AblationTable run_ablation(const data::Dataset& train_set, const data::Dataset& test_set, TrainConfig base,
                                  const std::vector<std::uint64_t>& seeds, const RunCallback& on_run = {}) {
    if (seeds.empty()) throw ConfigError("ablation_seeds: at least one seed required");
    AblationTable table;
    for (auto mode : {model::DaaMode::none, model::DaaMode::single_template, model::DaaMode::multi_template,
                      model::DaaMode::binary}) {
        AblationRow row;
        row.mode = mode;
        const std::size_t draws = model::uses_templates(mode) ? base.template_draws : 1;
        for (auto seed : seeds)
            for (std::size_t draw = 0; draw < draws; ++draw) {
                TrainConfig cfg = base;
                cfg.seed = seed;
                cfg.template_draw = draw;
                cfg.model.mode = mode;
                auto trained = train(cfg, train_set);
                auto rep = evaluate(trained.model, test_set, {1});
                AblationRun run{seed, draw, rep.results.front().mae, rep.results.front().ca};
                if (on_run) on_run(mode, run);
                row.runs.push_back(run);
            }
        for (const auto& r : row.runs) {
            row.mae += r.mae / row.runs.size();
            for (const auto& [n, v] : r.ca) row.ca[n] += v / row.runs.size();
        }
        table.rows.push_back(row);
    }
    return table;
}

// --------------------------------------------------------------------- bench

struct BenchRow {
    std::size_t interval = 1;
    std::size_t reps = 0;
    double median_ms = 0;
    double mean_ms = 0;
    double variance_ms2 = 0;
};

struct BenchReport {
    std::string device;
    bool style_table_precomputed = true;
    std::vector<BenchRow> rows;

    nlohmann::json to_json() const {
        auto arr = nlohmann::json::array();
        for (const auto& r : rows)
            arr.push_back({{"interval", r.interval},
                           {"reps", r.reps},
                           {"median_ms", round6(r.median_ms)},
                           {"mean_ms", round6(r.mean_ms)},
                           {"variance_ms2", round6(r.variance_ms2)}});
        return {{"device", device},
                {"scope", "daa+decode (encoder excluded)"},
                {"style_table_precomputed", style_table_precomputed},
                {"rows", arr}};
    }
};

/// Median wall time of building the delta stack and decoding it, for one
/// already-encoded image. The style table is evaluated once up front.
inline BenchReport bench_inference(const Model& m, const nn::Tensor<float>& image,
                                   const std::vector<std::size_t>& intervals, std::size_t reps = 100,
                                   std::size_t warmup = 10, std::string device = "cpu") {
    if (reps == 0) throw ConfigError("bench_reps: must be positive");
    if (m.config().mode == model::DaaMode::none) throw ContractError("mode none has no DAA stage to benchmark");
    nn::NoGradGuard ng;
    auto fm = m.encode_face(image);
    std::optional<model::StyleTable<float>> table;
    if (m.config().mode == model::DaaMode::binary) table = m.frozen_style_table();
    const auto* tp = table ? &*table : nullptr;

    BenchReport rep;
    rep.device = std::move(device);
    rep.style_table_precomputed = tp != nullptr;
    for (auto d : intervals) {
        for (std::size_t i = 0; i < warmup; ++i) (void)model::decode_age(m.delta_stack(fm, d, tp), m.head());
        std::vector<double> times;
        times.reserve(reps);
        for (std::size_t i = 0; i < reps; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            auto out = model::decode_age(m.delta_stack(fm, d, tp), m.head());
            times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
            if (!std::isfinite(out.x_pred.item())) throw NumericError("non-finite prediction while benchmarking");
        }
        BenchRow row;
        row.interval = d;
        row.reps = reps;
        for (double t : times) row.mean_ms += t / reps;
        for (double t : times) row.variance_ms2 += (t - row.mean_ms) * (t - row.mean_ms) / reps;
        std::sort(times.begin(), times.end());
        row.median_ms = reps % 2 ? times[reps / 2] : 0.5 * (times[reps / 2 - 1] + times[reps / 2]);
        rep.rows.push_back(row);
    }
    return rep;
}

// ----------------------------------------------------------------- S/T export

struct StRow {
    int age;
    double s;
    double t;
};

inline std::vector<StRow> style_rows(const Model& m) {
    if (m.config().mode != model::DaaMode::binary) throw ContractError("S/T export needs a binary-mapping model");
    auto table = m.frozen_style_table();
    std::vector<StRow> rows;
    for (int y = 0; y < model::kNumStyleAges; ++y)
        rows.push_back({y, static_cast<double>(table.s.value()[y]), static_cast<double>(table.t.value()[y])});
    return rows;
}

inline std::vector<StRow> export_st(const Model& m, const std::filesystem::path& path) {
    auto rows = style_rows(m);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "age,s,t\n";
    for (const auto& r : rows) out << r.age << ',' << fmt6(r.s) << ',' << fmt6(r.t) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
    return rows;
}

/// Least-squares slope of v against age.
inline double fit_slope(const std::vector<StRow>& rows, double StRow::*field) {
    double ma = 0, mv = 0;
    for (const auto& r : rows) ma += r.age, mv += r.*field;
    ma /= rows.size();
    mv /= rows.size();
    double sav = 0, saa = 0;
    for (const auto& r : rows) sav += (r.age - ma) * (r.*field - mv), saa += (r.age - ma) * (r.age - ma);
    return sav / saa;
}

}  // namespace daa::train
