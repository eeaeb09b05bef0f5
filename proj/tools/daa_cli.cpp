// daa: command-line driver for dataset generation, training, evaluation,
// ablation, benchmarking and S/T export.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "daa/cli/run_config.hpp"
#include "daa/data/dataset_io.hpp"

namespace fs = std::filesystem;
using namespace daa;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string interval;
    std::string daa_mode;
    std::optional<std::size_t> threads;
    std::string data;
    std::string weights;
    std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "run configuration file (key = value)");
    cmd->add_option("--seed", f.seed, "overrides the config seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--threads", f.threads, "worker threads (1 for bitwise reproducibility)");
    cmd->add_option("--set", f.set, "key=value override, repeatable");
}

cli::RunConfig resolve(const Flags& f) {
    auto c = f.config.empty() ? cli::RunConfig{} : cli::RunConfig::load(f.config);
    for (const auto& kv : f.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.seed) c.set("seed", std::to_string(*f.seed));
    if (f.threads) c.set("threads", std::to_string(*f.threads));
    if (!f.daa_mode.empty()) c.set("daa_mode", f.daa_mode);
    if (!f.interval.empty()) c.set("eval_intervals", f.interval);
    if (!f.data.empty()) c.set("data_dir", f.data);
    if (!f.out.empty()) c.set("out_dir", f.out);
    nn::set_num_threads(c.get_size("threads"));
    return c;
}

fs::path prepare_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void echo_config(const fs::path& dir, const cli::RunConfig& c) { write_text(dir / "config.txt", c.to_text()); }

data::Dataset load_split(const fs::path& dir, const std::string& name) {
    auto r = data::load_dataset_checked(dir / name);
    if (r.clamped_labels) spdlog::warn("{}: {} age labels outside [0, 99] were clamped", name, r.clamped_labels);
    spdlog::debug("loaded {} ({} samples)", (dir / name).string(), r.data.size());
    return std::move(r.data);
}

fs::path weights_path(const Flags& f, const cli::RunConfig& c) {
    return f.weights.empty() ? fs::path(c.get("out_dir")) / "weights.daaw" : fs::path(f.weights);
}

// The weight file carries its own architecture; it has to agree with the one
// the resolved config describes.
train::Model load_model(const Flags& f, const cli::RunConfig& c, const model::ModelConfig& expected) {
    const auto path = weights_path(f, c);
    auto m = train::Model::load(path);
    const auto have = m.config().to_json(), want = expected.to_json();
    if (have != want) {
        std::string diff;
        for (const auto& [k, v] : want.items())
            if (!have.contains(k) || have.at(k) != v) diff += (diff.empty() ? "" : ", ") + k;
        throw FormatError("architecture mismatch between '" + path.string() + "' and config (" + diff +
                          "): file has " + have.dump() + ", config wants " + want.dump());
    }
    return m;
}

// ------------------------------------------------------------------ commands

void cmd_gen_data(const Flags& f) {
    auto c = resolve(f);
    const auto spec = c.synthetic_spec();
    const auto dir = prepare_dir(f.out.empty() ? c.get("data_dir") : f.out);
    auto sets = data::gen_synthetic(spec);
    data::save_dataset(sets.train, dir / "train.daad");
    data::save_dataset(sets.test, dir / "test.daad");
    echo_config(dir, c);
    for (const auto* d : {&sets.train, &sets.test}) {
        std::map<int, std::size_t> buckets;
        for (const auto& s : d->samples) ++buckets[s.age / 10 * 10];
        std::cout << (d == &sets.train ? "train" : "test") << " (" << d->size() << " samples):";
        for (const auto& [b, n] : buckets) std::cout << ' ' << b << '-' << b + 9 << ':' << n;
        std::cout << '\n';
    }
    spdlog::info("wrote {} and {}", (dir / "train.daad").string(), (dir / "test.daad").string());
}

void cmd_train(const Flags& f) {
    auto c = resolve(f);
    const auto cfg = c.train_config();
    const auto train_set = load_split(c.get("data_dir"), "train.daad");
    const auto dir = prepare_dir(c.get("out_dir"));
    echo_config(dir, c);
    std::ofstream log(dir / "loss.log", std::ios::trunc);
    if (!log) throw IoError("cannot open '" + (dir / "loss.log").string() + "' for writing");
    spdlog::info("training {} model on {} samples for {} epochs", model::to_string(cfg.model.mode), train_set.size(),
                 cfg.epochs);
    auto r = train::train(cfg, train_set, [&](const train::EpochStats& s) {
        log << s.epoch << ' ' << train::fmt6(s.lr) << ' ' << train::fmt6(s.loss) << '\n';
        log.flush();
        spdlog::info("epoch {:>3}  lr {:.6f}  loss {:.4f}  ({:.1f}s)", s.epoch, s.lr, s.loss, s.seconds);
    });
    r.model.save(dir / "weights.daaw");
    spdlog::info("wrote {} ({:.1f}s)", (dir / "weights.daaw").string(), r.seconds);
}

void cmd_eval(const Flags& f) {
    auto c = resolve(f);
    const auto cfg = c.train_config();
    const auto m = load_model(f, c, cfg.model);
    const auto test_set = load_split(c.get("data_dir"), "test.daad");
    const auto rep = train::evaluate(m, test_set, cfg.eval_intervals);
    const auto dir = prepare_dir(c.get("out_dir"));
    echo_config(dir, c);
    write_text(dir / "report.json", rep.to_json().dump(2) + "\n");
    write_text(dir / "timings.json", nlohmann::json(rep.timings_ms).dump(2) + "\n");
    std::cout << "interval      mae    ca(3)    ca(5)    ca(7)\n";
    for (const auto& r : rep.results)
        std::cout << fmt::format("{:>8} {:>8.3f} {:>8.2f} {:>8.2f} {:>8.2f}\n", r.interval, r.mae, r.ca.at(3), r.ca.at(5),
                                 r.ca.at(7));
}

void cmd_ablation(const Flags& f) {
    auto c = resolve(f);
    const auto cfg = c.train_config();
    const auto train_set = load_split(c.get("data_dir"), "train.daad");
    const auto test_set = load_split(c.get("data_dir"), "test.daad");
    const auto dir = prepare_dir(c.get("out_dir"));
    echo_config(dir, c);
    auto table = train::run_ablation(train_set, test_set, cfg, c.get_list("ablation_seeds"),
                                     [](model::DaaMode m, const train::AblationRun& r) {
                                         spdlog::info("{:<16} seed {} draw {}  mae {:.3f}", model::to_string(m), r.seed,
                                                      r.template_draw, r.mae);
                                     });
    write_text(dir / "ablation.json", table.to_json().dump(2) + "\n");
    std::cout << "model                 mae    ca(3)    ca(5)    ca(7)  runs\n";
    for (const auto& r : table.rows)
        std::cout << fmt::format("{:<16} {:>8.3f} {:>8.2f} {:>8.2f} {:>8.2f} {:>5}\n", train::ablation_label(r.mode),
                                 r.mae, r.ca.at(3), r.ca.at(5), r.ca.at(7), r.runs.size());
}

void cmd_bench(const Flags& f) {
    auto c = resolve(f);
    const auto cfg = c.train_config();
    const auto m = load_model(f, c, cfg.model);
    nn::Tensor<float> image;
    const fs::path test_file = fs::path(c.get("data_dir")) / "test.daad";
    if (fs::exists(test_file)) {
        image = load_split(c.get("data_dir"), "test.daad").samples.at(0).image;
    } else {
        spdlog::info("{} not found; benchmarking on a generated sample", test_file.string());
        image = data::synth_sample(c.synthetic_spec(), data::Split::test, 0).image;
    }
    const auto device = "cpu, " + std::to_string(nn::num_threads()) + " thread(s)";
    auto rep = train::bench_inference(m, image, cfg.eval_intervals, c.get_size("bench_reps"), c.get_size("bench_warmup"),
                                      device);
    const auto dir = prepare_dir(c.get("out_dir"));
    echo_config(dir, c);
    write_text(dir / "bench.json", rep.to_json().dump(2) + "\n");
    std::cout << "interval  median_ms   variance_ms2  reps\n";
    for (const auto& r : rep.rows)
        std::cout << fmt::format("{:>8} {:>10.4f} {:>14.6f} {:>5}\n", r.interval, r.median_ms, r.variance_ms2, r.reps);
}

void cmd_export_st(const Flags& f) {
    auto c = resolve(f);
    const auto m = load_model(f, c, c.train_config().model);
    const auto dir = prepare_dir(c.get("out_dir"));
    echo_config(dir, c);
    auto rows = train::export_st(m, dir / "st.csv");
    std::cout << fmt::format("wrote {} ({} rows); slope(S) {:.6g}, slope(T) {:.6g}\n", (dir / "st.csv").string(),
                             rows.size(), train::fit_slope(rows, &train::StRow::s), train::fit_slope(rows, &train::StRow::t));
}

std::string one_line(std::string s) {
    for (auto& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("daa");
    logger->set_pattern("[%H:%M:%S] %l: %v");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("DAA_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else throw ConfigError("DAA_LOG must be error, info or debug, got '" + level + "'");
}

}  // namespace

int main(int argc, char** argv) {
    nn::tune_allocator();
    CLI::App app{"Delta Age AdaIN age estimation at desk scale"};
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic train/test containers");
    add_common(gen, f);

    auto* tr = app.add_subcommand("train", "train a model and write weights + loss log");
    add_common(tr, f);
    tr->add_option("--data", f.data, "dataset directory");
    tr->add_option("--daa-mode", f.daa_mode, "none | single-template | multi-template | binary");

    auto* ev = app.add_subcommand("eval", "evaluate MAE and CA(3,5,7) per interval");
    add_common(ev, f);
    ev->add_option("--data", f.data, "dataset directory");
    ev->add_option("--weights", f.weights, "weight file (default <out>/weights.daaw)");
    ev->add_option("--daa-mode", f.daa_mode, "mode the weights were trained with");
    ev->add_option("--interval", f.interval, "comma-separated intervals, e.g. 1,10");

    auto* ab = app.add_subcommand("ablation", "train and compare the four DAA variants");
    add_common(ab, f);
    ab->add_option("--data", f.data, "dataset directory");

    auto* be = app.add_subcommand("bench", "time DAA + decoding per interval");
    add_common(be, f);
    be->add_option("--data", f.data, "dataset directory (first test image is used)");
    be->add_option("--weights", f.weights, "weight file (default <out>/weights.daaw)");
    be->add_option("--daa-mode", f.daa_mode, "mode the weights were trained with");
    be->add_option("--interval", f.interval, "comma-separated intervals");

    auto* ex = app.add_subcommand("export-st", "write the learned S/T table as CSV");
    add_common(ex, f);
    ex->add_option("--weights", f.weights, "weight file (default <out>/weights.daaw)");
    ex->add_option("--daa-mode", f.daa_mode, "mode the weights were trained with");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << '\n';
        return 2;
    }

    try {
        setup_logging();
        if (*gen) cmd_gen_data(f);
        else if (*tr) cmd_train(f);
        else if (*ev) cmd_eval(f);
        else if (*ab) cmd_ablation(f);
        else if (*be) cmd_bench(f);
        else if (*ex) cmd_export_st(f);
    } catch (const daa::Error& e) {
        std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}
