#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "daa/cli/run_config.hpp"
#include "daa/train/experiments.hpp"

using namespace daa;
using namespace daa::train;
using model::DaaMode;

namespace {

// 32 x 32 images keep these tests in the seconds range.
data::SyntheticSpec tiny_spec(std::size_t n_train, std::size_t n_test, std::uint64_t seed = 3) {
    data::SyntheticSpec s;
    s.n_train = n_train;
    s.n_test = n_test;
    s.image_size = 32;
    s.field_grid = 4;
    s.texture_base_freq = 2;
    s.seed = seed;
    return s;
}

TrainConfig tiny_config(DaaMode mode, std::size_t epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 8;
    c.model.encoder = model::EncoderConfig::preset(model::EncoderVariant::tiny, 8, 32);
    c.model.head_channels = 8;
    c.model.mode = mode;
    return c;
}

const data::SyntheticSplits& shared_data() {
    static const auto d = data::gen_synthetic(tiny_spec(48, 24));
    return d;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("daa_train_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

// ------------------------------------------------------------------ metrics

TEST(Metrics, MaeExamples) {
    std::vector<double> t{10, 20, 30};
    EXPECT_EQ(mean_absolute_error(t, t), 0.0);
    std::vector<double> p{11, 23}, q{10, 20};
    EXPECT_EQ(mean_absolute_error(p, q), 2.0);
    EXPECT_THROW(mean_absolute_error(std::vector<double>{}, std::vector<double>{}), ContractError);
}

TEST(Metrics, CumulativeAccuracyIsStrict) {
    std::vector<double> truth{0, 0, 0}, pred{2.9, 3.0, 3.1};
    EXPECT_NEAR(cumulative_accuracy(pred, truth, 3), 100.0 / 3, 1e-12);
    EXPECT_EQ(cumulative_accuracy(truth, truth, 3), 100.0);
    EXPECT_EQ(cumulative_accuracy(pred, truth, 0), 0.0);
    EXPECT_EQ(cumulative_accuracy(truth, truth, 0), 0.0);  // |0| < 0 is false
    EXPECT_THROW(cumulative_accuracy(std::vector<double>{}, std::vector<double>{}, 3), ContractError);
}

TEST(Metrics, CumulativeAccuracyIsMonotoneInN) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> err(0, 6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> truth(50), pred(50);
        for (std::size_t i = 0; i < 50; ++i) {
            truth[i] = i;
            pred[i] = i + std::round(err(rng) * 2) / 2;  // half-year grid hits the boundaries
        }
        double prev = 0;
        for (double n = 0; n <= 12; n += 0.5) {
            const double ca = cumulative_accuracy(pred, truth, n);
            EXPECT_GE(ca, prev);
            EXPECT_LE(ca, 100.0);
            prev = ca;
        }
    }
}

TEST(Metrics, RoundSixSignificantDigits) {
    EXPECT_EQ(round6(3.14159265), 3.14159);
    EXPECT_EQ(fmt6(2.0 / 3.0), "0.666667");
    EXPECT_EQ(fmt6(1234567.0), "1.23457e+06");
}

// ----------------------------------------------------------------- training

TEST(Train, ZeroEpochsReturnsInitialWeights) {
    auto cfg = tiny_config(DaaMode::binary, 0);
    auto r = train::train(cfg, shared_data().train);
    EXPECT_TRUE(r.loss_history.empty());
    Model fresh(cfg.model, cfg.seed);
    auto a = r.model.named_tensors(), b = fresh.named_tensors();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor, b[i].tensor) << a[i].name;
}

TEST(Train, SameSeedSameHistoryAndWeights) {
    auto cfg = tiny_config(DaaMode::binary, 2);
    auto a = train::train(cfg, shared_data().train), b = train::train(cfg, shared_data().train);
    EXPECT_EQ(a.loss_history, b.loss_history);
    auto ta = a.model.named_tensors(), tb = b.model.named_tensors();
    for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i].tensor, tb[i].tensor);
    cfg.seed = 4;
    EXPECT_NE(train::train(cfg, shared_data().train).loss_history, a.loss_history);
}

TEST(Train, ThreadCountDoesNotChangeResults) {
    auto cfg = tiny_config(DaaMode::binary, 1);
    nn::set_num_threads(1);
    auto a = train::train(cfg, shared_data().train);
    nn::set_num_threads(3);
    auto b = train::train(cfg, shared_data().train);
    nn::set_num_threads(1);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.model.named_tensors().back().tensor, b.model.named_tensors().back().tensor);
}

TEST(Train, LossDecreasesOnSmallRun) {
    auto cfg = tiny_config(DaaMode::binary, 8);
    cfg.base_lr = 3e-3;
    auto r = train::train(cfg, shared_data().train);
    ASSERT_EQ(r.loss_history.size(), 8u);
    EXPECT_LT(r.loss_history.back(), r.loss_history.front());
}

TEST(Train, NonFiniteInputIsDiagnosed) {
    auto d = shared_data().train;
    d.samples[0].image[5 * 32 + 5] = std::numeric_limits<float>::quiet_NaN();
    d.samples.resize(1);
    try {
        auto cfg = tiny_config(DaaMode::binary, 1);
        cfg.augment = data::AugmentConfig::identity();
        train::train(cfg, d);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        const bool named = msg.find("first non-finite tensor: ") != std::string::npos ||
                           msg.find("non-finite gradient in 'encoder.") != std::string::npos;
        EXPECT_TRUE(named) << msg;
    }
}

TEST(Train, EmptyDatasetAndBadConfig) {
    EXPECT_THROW(train::train(tiny_config(DaaMode::binary, 1), data::Dataset{}), ContractError);
    auto cfg = tiny_config(DaaMode::binary, 1);
    cfg.eval_intervals = {3};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = tiny_config(DaaMode::binary, 1);
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Templates, OnePerAgeWithNearestFallback) {
    data::Dataset d;
    d.image_shape = {1, 2, 2};
    for (int age : {10, 10, 40, 90}) d.samples.push_back({nn::Tensor<float>(d.image_shape), age, d.samples.size()});
    auto picks = select_templates(d, 1);
    ASSERT_EQ(picks.size(), 100u);
    EXPECT_EQ(d.samples[picks.at(0)].age, 10);
    EXPECT_EQ(d.samples[picks.at(25)].age, 10);  // tie between 10 and 40 goes to the lower age
    EXPECT_EQ(d.samples[picks.at(26)].age, 40);
    EXPECT_EQ(picks.at(40), 2u);
    EXPECT_EQ(d.samples[picks.at(99)].age, 90);
    EXPECT_EQ(select_templates(d, 1), picks);
}

TEST(Templates, TemplateModelsTrainAndRoundTrip) {
    for (auto mode : {DaaMode::single_template, DaaMode::multi_template}) {
        auto r = train::train(tiny_config(mode, 1), shared_data().train);
        ASSERT_TRUE(r.model.template_stats().has_value());
        const auto dir = temp_dir("tpl");
        r.model.save(dir / "w.daaw");
        auto back = Model::load(dir / "w.daaw");
        EXPECT_EQ(evaluate(back, shared_data().test, {1, 10}).to_json(), evaluate(r.model, shared_data().test, {1, 10}).to_json());
        std::filesystem::remove_all(dir);
    }
}

// --------------------------------------------------------------- evaluation

TEST(Evaluate, ReportStructureAndInvariants) {
    auto r = train::train(tiny_config(DaaMode::binary, 1), shared_data().train);
    auto rep = evaluate(r.model, shared_data().test, {1, 10});
    ASSERT_EQ(rep.results.size(), 2u);
    EXPECT_EQ(rep.n_samples, shared_data().test.size());
    for (const auto& res : rep.results) {
        EXPECT_GE(res.mae, 0.0);
        EXPECT_LE(res.ca.at(3), res.ca.at(5));
        EXPECT_LE(res.ca.at(5), res.ca.at(7));
        EXPECT_GE(res.ca.at(3), 0.0);
        EXPECT_LE(res.ca.at(7), 100.0);
    }
    auto j = rep.to_json();
    EXPECT_EQ(j["results"].size(), 2u);
    EXPECT_EQ(j["results"][1]["interval"], 10);
    EXPECT_FALSE(j.contains("timings_ms"));
    EXPECT_TRUE(rep.to_json(true).contains("timings_ms"));
    EXPECT_EQ(j["results"][0]["mae"].get<double>(), round6(rep.results[0].mae));
    EXPECT_THROW(evaluate(r.model, data::Dataset{}, {1}), ContractError);
}

TEST(Evaluate, BatchedPredictionsMatchPerImageReference) {
    auto r = train::train(tiny_config(DaaMode::binary, 1), shared_data().train);
    const auto& test = shared_data().test;
    auto p = predict_dataset(r.model, test, {1, 5, 50}, 7);
    for (std::size_t d : {1u, 5u, 50u})
        for (std::size_t i = 0; i < test.size(); i += 5)
            EXPECT_NEAR(p.by_interval.at(d)[i], r.model.predict(test.samples[i].image, d).age, 2e-3)
                << "interval " << d << " sample " << i;
    EXPECT_EQ(evaluate_mae(r.model, test, 5), evaluate(r.model, test, {5}).results[0].mae);
    EXPECT_EQ(evaluate_ca(r.model, test, 7, 1), evaluate(r.model, test, {1}).results[0].ca.at(7));
}

TEST(Evaluate, PerfectPredictionsGiveZeroMae) {
    std::vector<double> t{1, 2, 3};
    EXPECT_EQ(mean_absolute_error(t, t), 0.0);
    EXPECT_EQ(cumulative_accuracy(t, t, 3), 100.0);
}

// -------------------------------------------------------------- experiments

TEST(Ablation, FourRowsAndDeterministic) {
    const auto& d = shared_data();
    auto base = tiny_config(DaaMode::binary, 1);
    base.template_draws = 2;
    auto a = run_ablation(d.train, d.test, base, {5});
    ASSERT_EQ(a.rows.size(), 4u);
    EXPECT_EQ(ablation_label(a.rows[0].mode), "w/o DAA");
    EXPECT_EQ(ablation_label(a.rows[1].mode), "single channel");
    EXPECT_EQ(ablation_label(a.rows[2].mode), "multi-channel");
    EXPECT_EQ(ablation_label(a.rows[3].mode), "Binary mapping");
    EXPECT_EQ(a.row(DaaMode::none).runs.size(), 1u);
    EXPECT_EQ(a.row(DaaMode::single_template).runs.size(), 2u);
    EXPECT_EQ(a.row(DaaMode::binary).runs.size(), 1u);
    for (const auto& r : a.rows) EXPECT_GE(r.mae, 0.0);
    auto b = run_ablation(d.train, d.test, base, {5});
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_THROW(run_ablation(d.train, d.test, base, {}), ConfigError);
}

TEST(Bench, OneRowPerIntervalWithVariance) {
    Model m(tiny_config(DaaMode::binary, 0).model, 1);
    const auto& img = shared_data().test.samples[0].image;
    auto rep = bench_inference(m, img, {1, 10, 50}, 20, 2);
    ASSERT_EQ(rep.rows.size(), 3u);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.reps, 20u);
        EXPECT_GT(r.median_ms, 0.0);
        EXPECT_GE(r.variance_ms2, 0.0);
    }
    EXPECT_TRUE(rep.style_table_precomputed);
    EXPECT_EQ(rep.to_json()["rows"].size(), 3u);
    Model none(tiny_config(DaaMode::none, 0).model, 1);
    EXPECT_THROW(bench_inference(none, img, {1}), ContractError);
}

TEST(ExportSt, HundredRowsMatchingTable) {
    Model m(tiny_config(DaaMode::binary, 0).model, 9);
    const auto dir = temp_dir("st");
    auto rows = export_st(m, dir / "st.csv");
    std::ifstream in(dir / "st.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "age,s,t");
    auto table = m.frozen_style_table();
    int n = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(line, std::to_string(n) + "," + fmt6(table.s.value()[n]) + "," + fmt6(table.t.value()[n]));
        EXPECT_EQ(rows[n].s, static_cast<double>(table.s.value()[n]));
        ++n;
    }
    EXPECT_EQ(n, 100);
    std::filesystem::remove_all(dir);
    Model tpl(tiny_config(DaaMode::multi_template, 0).model, 1);
    EXPECT_THROW(export_st(tpl, dir / "x.csv"), ContractError);
}

TEST(ExportSt, SlopeFit) {
    std::vector<StRow> rows;
    for (int y = 0; y < 100; ++y) rows.push_back({y, 2.0 - 0.01 * y, 0.5 + 0.03 * y});
    EXPECT_NEAR(fit_slope(rows, &StRow::s), -0.01, 1e-12);
    EXPECT_NEAR(fit_slope(rows, &StRow::t), 0.03, 1e-12);
}

// --------------------------------------------------------------- run config

TEST(RunConfigTest, DefaultsResolve) {
    cli::RunConfig c;
    auto spec = c.synthetic_spec();
    EXPECT_EQ(spec.n_train, 2000u);
    EXPECT_EQ(spec.n_test, 500u);
    auto t = c.train_config();
    EXPECT_EQ(t.epochs, 30u);
    EXPECT_EQ(t.batch_size, 32u);
    EXPECT_EQ(t.base_lr, 0.001);
    EXPECT_EQ(t.adam.weight_decay, 0.0005);
    EXPECT_EQ(t.adam.beta1, 0.9);
    EXPECT_EQ(t.model.mode, DaaMode::binary);
    EXPECT_EQ(t.model.encoder.out_size(), 8u);
    EXPECT_EQ(t.model.encoder.out_channels(), 32u);
    EXPECT_EQ(t.eval_intervals, (std::vector<std::size_t>{1, 2, 5, 10, 20, 50}));
    EXPECT_EQ(c.get_list("ablation_seeds"), (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(RunConfigTest, ParseCommentsAndEchoRoundTrip) {
    auto c = cli::RunConfig::parse("# desk run\nepochs = 5   # short\n\n  daa_mode=none\n");
    EXPECT_EQ(c.get_size("epochs"), 5u);
    EXPECT_EQ(c.train_config().model.mode, DaaMode::none);
    auto back = cli::RunConfig::parse(c.to_text());
    EXPECT_EQ(back.to_text(), c.to_text());
}

TEST(RunConfigTest, UnknownKeyIsHardError) {
    try {
        cli::RunConfig::parse("epochs = 5\nepoch = 6\n", "x.conf");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("x.conf:2: unknown key 'epoch'"), std::string::npos) << e.what();
    }
    EXPECT_THROW(cli::RunConfig::parse("just words\n"), ConfigError);
}

TEST(RunConfigTest, BadValuesNameTheirKey) {
    auto expect_key = [](const std::string& text, const std::string& key, bool spec) {
        auto c = cli::RunConfig::parse(text);
        try {
            if (spec) c.synthetic_spec();
            else c.train_config();
            FAIL() << text;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
        }
    };
    expect_key("std_floor = -1", "std_floor", true);
    expect_key("n_train = many", "n_train", true);
    expect_key("eval_intervals = 1,3", "eval_intervals", false);
    expect_key("daa_mode = triple", "daa mode", false);
    expect_key("augment = maybe", "augment", false);
    expect_key("aug_scale_min = 1.5", "aug_scale_min", false);
}
