// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "daa/cli/run_config.hpp"
#include "daa/data/dataset_io.hpp"

namespace fs = std::filesystem;
using namespace daa;
using model::DaaMode;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int run_command(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "daa_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Outcome run_suites(const std::vector<std::pair<std::string, std::string>>& suites, double budget_s) {
    const auto t0 = Clock::now();
    std::string failed;
    for (const auto& [bin, filter] : suites) {
        const auto log = scratch() / (fs::path(bin).filename().string() + ".log");
        if (run_command(bin + " --gtest_brief=1 --gtest_filter='" + filter + "' > " + log.string() + " 2>&1") != 0)
            failed += " " + filter + " (see " + log.string() + ")";
    }
    const double s = seconds_since(t0);
    if (!failed.empty()) return {false, "failing:" + failed};
    return {s < budget_s, fmt::format("all checks pass in {:.1f} s (budget {:.0f} s)", s, budget_s)};
}

// ---------------------------------------------------------------- criteria

Outcome gradient_suite() {
    return run_suites({{DAA_TEST_NN_CORE, "GradientSuite.*:Relu.GradientOfSum*"},
                       {DAA_TEST_DAA_MODEL, "Model.EndToEndFiniteDifferences:DaaAlgebra.BinaryGradientWrtT"}},
                      60);
}

Outcome algebra_suite() {
    return run_suites({{DAA_TEST_DAA_MODEL, "DaaAlgebra.*:Decode.*:DeltaStackTest.*:Templates.OneChannelModesCoincide"}},
                      60);
}

Outcome binary_codes() {
    const auto m = model::build_code_matrix();
    std::set<model::AgeCode> distinct(m.bits.begin(), m.bits.end());
    const model::AgeCode first{0, 0, 0, 0, 0, 0, 0, 1}, last{0, 1, 1, 0, 0, 1, 0, 0};
    double worst_mean = 0;
    for (int b = 0; b < model::kCodeBits; ++b) {
        double mean = 0;
        for (int y = 0; y < model::kNumStyleAges; ++y) mean += m.normalized[y * model::kCodeBits + b];
        worst_mean = std::max(worst_mean, std::abs(mean / model::kNumStyleAges));
    }
    model::DaaModel<float> net(model::ModelConfig{}, 1);
    const auto table = net.frozen_style_table();
    const bool ok = distinct.size() == 100 && m.bits[0] == first && m.bits[99] == last && worst_mean < 1e-6 &&
                    table.s.numel() == 100 && table.t.numel() == 100;
    return {ok, fmt::format("{} distinct codes, endpoints {}, max |column mean| {:.1e}, S/T lengths {}/{}",
                            distinct.size(), m.bits[0] == first && m.bits[99] == last ? "ok" : "wrong", worst_mean,
                            table.s.numel(), table.t.numel())};
}

Outcome overfit() {
    const auto t0 = Clock::now();
    data::SyntheticSpec spec;
    spec.n_train = 8;
    spec.n_test = 1;
    const auto d = data::gen_synthetic(spec);
    train::TrainConfig cfg;
    cfg.epochs = 300;
    cfg.batch_size = 8;
    cfg.augment = data::AugmentConfig::identity();
    auto r = train::train(cfg, d.train);
    const double mae = train::evaluate_mae(r.model, d.train, 1);
    const double s = seconds_since(t0);
    return {mae < 1.0 && s < 300,
            fmt::format("train MAE {:.4f} (< 1.0), final loss {:.4g}, {:.0f} s (< 300)", mae, r.loss_history.back(), s)};
}

// Criteria 5, 7, 8 and 9 share the default desk run.
struct DeskRun {
    std::optional<train::Model> model;
    data::SyntheticSplits data;
    train::EvalReport report;
    double seconds = 0;
};

DeskRun& desk_run() {
    static DeskRun run = [] {
        DeskRun r;
        const auto t0 = Clock::now();
        const cli::RunConfig defaults;
        r.data = data::gen_synthetic(defaults.synthetic_spec());
        const auto cfg = defaults.train_config();
        auto trained = train::train(cfg, r.data.train, [](const train::EpochStats& e) {
            std::fprintf(stderr, "  desk epoch %2zu  loss %.4f  (%.1f s)\n", e.epoch, e.loss, e.seconds);
        });
        r.model.emplace(std::move(trained.model));
        r.report = train::evaluate(*r.model, r.data.test, cfg.eval_intervals);
        r.seconds = seconds_since(t0);
        r.model->save(scratch() / "desk.daaw");
        std::ofstream(scratch() / "desk_report.json") << r.report.to_json(true).dump(2) << '\n';
        return r;
    }();
    return run;
}

Outcome synthetic_end_to_end() {
    auto& run = desk_run();
    const auto& r = run.report.at(1);
    return {r.mae <= 5.0 && r.ca.at(7) >= 70.0 && run.seconds < 900,
            fmt::format("test MAE {:.3f} (<= 5.0), CA(7) {:.1f}% (>= 70), {:.0f} s (< 900)", r.mae, r.ca.at(7),
                        run.seconds)};
}

// 1500/500 samples and 20 epochs per run keep the twelve runs inside the hour.
Outcome ablation_pattern() {
    const auto t0 = Clock::now();
    cli::RunConfig c;
    c.set("n_train", "1500");
    c.set("epochs", "20");
    c.set("template_draws", "1");
    const auto d = data::gen_synthetic(c.synthetic_spec());
    auto table = train::run_ablation(d.train, d.test, c.train_config(), c.get_list("ablation_seeds"),
                                     [](DaaMode m, const train::AblationRun& r) {
                                         std::fprintf(stderr, "  ablation %-16s seed %llu  mae %.3f\n",
                                                      model::to_string(m).c_str(),
                                                      static_cast<unsigned long long>(r.seed), r.mae);
                                     });
    std::ofstream(scratch() / "ablation.json") << table.to_json().dump(2) << '\n';
    const double none = table.row(DaaMode::none).mae, single = table.row(DaaMode::single_template).mae,
                 multi = table.row(DaaMode::multi_template).mae, binary = table.row(DaaMode::binary).mae;
    constexpr double tie = 0.05;
    const bool ok = binary <= multi + tie && multi <= single + tie && binary < none;
    const double s = seconds_since(t0);
    return {ok && s < 3600,
            fmt::format("mean MAE binary {:.3f}, multi {:.3f}, single {:.3f}, w/o DAA {:.3f} ({:.0f} s)", binary,
                        multi, single, none, s)};
}

Outcome interval_stability() {
    auto& run = desk_run();
    const double base = run.report.at(1).mae;
    double worst = 0;
    std::string per;
    for (std::size_t d : {2u, 5u, 10u, 20u}) {
        const double diff = std::abs(run.report.at(d).mae - base);
        worst = std::max(worst, diff);
        per += fmt::format(" {}:{:.3f}", d, run.report.at(d).mae);
    }

    bool bitwise = true;
    const auto& m = *run.model;
    const auto table = m.frozen_style_table();
    nn::NoGradGuard ng;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto fm = m.encode_face(run.data.test.samples[i].image);
        const auto full = m.delta_stack(fm, 1, &table).deltas.value();
        const std::size_t per_slice = full.numel() / 100;
        for (std::size_t d : {2u, 5u, 10u, 20u, 50u}) {
            const auto sub = m.delta_stack(fm, d, &table).deltas.value();
            for (std::size_t k = 0; k < 100 / d; ++k)
                for (std::size_t j = 0; j < per_slice; ++j)
                    bitwise = bitwise && sub[k * per_slice + j] == full[k * d * per_slice + j];
        }
    }
    return {worst <= 0.15 && bitwise,
            fmt::format("MAE interval 1: {:.3f}, others{}; max |diff| {:.3f} (<= 0.15); subsequence bitwise: {}", base,
                        per, worst, bitwise ? "yes" : "no")};
}

Outcome timing_pattern() {
    auto& run = desk_run();
    const std::vector<std::size_t> intervals{1, 2, 5, 10, 20, 50};
    const auto rep = train::bench_inference(*run.model, run.data.test.samples[0].image, intervals, 100, 10);
    std::ofstream(scratch() / "bench.json") << rep.to_json().dump(2) << '\n';
    bool ok = true;
    std::string per;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        per += fmt::format("{}{}:{:.3f}", i ? " " : "", rep.rows[i].interval, rep.rows[i].median_ms);
        if (i > 0) ok = ok && rep.rows[i].median_ms <= 1.10 * rep.rows[i - 1].median_ms;
    }
    return {ok, "median ms per interval " + per};
}

Outcome st_trend() {
    auto rows = train::style_rows(*desk_run().model);
    const double ss = train::fit_slope(rows, &train::StRow::s), st = train::fit_slope(rows, &train::StRow::t);
    return {ss < 0 && st > 0, fmt::format("slope(S) {:.4g} (< 0), slope(T) {:.4g} (> 0)", ss, st)};
}

Outcome reproducibility() {
    const auto conf = scratch() / "repro.conf";
    std::ofstream(conf) << "n_train = 96\nn_test = 32\nepochs = 2\nthreads = 1\n";
    auto pipeline = [&](const std::string& name) {
        const auto dir = scratch() / name;
        const std::string base = std::string("DAA_LOG=error ") + DAA_CLI_PATH;
        const std::string common = " --config " + conf.string() + " --threads 1 --seed 7";
        const std::string data = " --data " + (dir / "data").string();
        const bool ok = run_command(base + " gen-data" + common + " --out " + (dir / "data").string() + " > /dev/null") == 0 &&
                        run_command(base + " train" + common + data + " --out " + dir.string()) == 0 &&
                        run_command(base + " eval" + common + data + " --out " + dir.string() + " > /dev/null") == 0;
        return ok ? dir : fs::path{};
    };
    const auto a = pipeline("repro_a"), b = pipeline("repro_b");
    if (a.empty() || b.empty()) return {false, "a pipeline step exited nonzero"};
    bool same = true;
    std::string files;
    for (const auto& f : {fs::path("data/train.daad"), fs::path("data/test.daad"), fs::path("weights.daaw"),
                          fs::path("loss.log"), fs::path("report.json")}) {
        const auto x = slurp(a / f);
        const bool eq = !x.empty() && x == slurp(b / f);
        same = same && eq;
        files += fmt::format(" {}:{}", f.filename().string(), eq ? "identical" : "DIFFERENT");
    }
    return {same, "two pipelines ->" + files};
}

}  // namespace

int main(int argc, char** argv) {
    nn::tune_allocator();
    nn::set_num_threads(1);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"DAA algebra suite", algebra_suite},
        {"binary codes", binary_codes},
        {"overfit sanity", overfit},
        {"synthetic end-to-end", synthetic_end_to_end},
        {"ablation pattern", ablation_pattern},
        {"interval stability", interval_stability},
        {"timing pattern", timing_pattern},
        {"S/T trend", st_trend},
        {"reproducibility", reproducibility},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

    int failures = 0;
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.count(i + 1)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        lines.push_back(fmt::format("{} criterion {:>2} ({}): {}", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                                    o.detail));
        std::printf("%s\n", lines.back().c_str());
        std::fflush(stdout);
    }
    std::printf("\nsummary (%zu run, %d failed)\n", lines.size(), failures);
    for (const auto& l : lines) std::printf("  %s\n", l.c_str());
    return failures ? 1 : 0;
}
