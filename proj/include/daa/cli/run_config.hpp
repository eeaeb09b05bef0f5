#pragma once

// Flat `key = value` run configuration. Blank lines and text after `#` are
// ignored. Every key has a default; unknown keys are rejected.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "daa/train/experiments.hpp"

namespace daa::cli {

struct KeyInfo {
    std::string key;
    std::string default_value;
    std::string help;
};

inline const std::vector<KeyInfo>& known_keys() {
    static const std::vector<KeyInfo> keys{
        // run
        {"seed", "1", "seed for data generation, initialization, shuffling, augmentation, templates"},
        {"threads", "1", "worker threads inside tensor ops (1 = bitwise reproducible)"},
        {"data_dir", "data", "dataset directory (train.daad, test.daad)"},
        {"out_dir", "run", "run directory for weights, reports and logs"},
        // synthetic data
        {"n_train", "2000", "training samples"},
        {"n_test", "500", "test samples"},
        {"image_size", "128", "image side length in pixels"},
        {"mean_base", "0.3", "image mean at age 0"},
        {"mean_slope", "0.004", "image mean increase per year"},
        {"std_base", "0.3", "image std at age 0"},
        {"std_slope", "0.0022", "image std decrease per year"},
        {"std_floor", "0.05", "lower bound on image std"},
        {"texture_freq_gain", "0.02", "relative texture frequency increase per year"},
        {"texture_base_freq", "6", "texture cycles across the image at age 0"},
        {"texture_amp", "0.8", "texture amplitude relative to the smooth field"},
        {"field_grid", "8", "knot spacing of the smooth random field (cells per side)"},
        // model
        {"encoder", "tiny", "tiny | resnet18-like | c3ae-plain-like"},
        {"encoder_channels", "0", "encoder output channels C (0 = preset default)"},
        {"head_channels", "64", "decoder conv width"},
        {"daa_mode", "binary", "none | single-template | multi-template | binary"},
        {"code_norm", "column-standardize", "none | column-standardize | scale-to-[0,1]"},
        // optimization
        {"epochs", "30", "training epochs"},
        {"batch_size", "32", "mini-batch size"},
        {"base_lr", "0.001", "initial learning rate (cosine decay to 0)"},
        {"weight_decay", "0.0005", "L2 weight decay"},
        {"momentum", "0.9", "Adam beta1"},
        {"adam_beta2", "0.999", "Adam beta2"},
        {"adam_eps", "1e-8", "Adam epsilon"},
        // augmentation
        {"augment", "true", "enable training augmentation"},
        {"aug_flip_prob", "0.5", "horizontal flip probability"},
        {"aug_scale_min", "0.9", "minimum zoom factor"},
        {"aug_scale_max", "1.1", "maximum zoom factor"},
        {"aug_rotate_deg", "10", "rotation range in degrees (symmetric)"},
        {"aug_translate_px", "8", "translation range in pixels per axis (symmetric)"},
        // evaluation and experiments
        {"eval_intervals", "1,2,5,10,20,50", "style-age intervals for eval and bench"},
        {"template_draws", "3", "template draws per seed for template ablation rows"},
        {"ablation_seeds", "1,2,3", "training seeds for the ablation"},
        {"bench_reps", "100", "timed repetitions per interval"},
        {"bench_warmup", "10", "untimed warmup repetitions per interval"},
    };
    return keys;
}

class RunConfig {
public:
    RunConfig() {
        for (const auto& k : known_keys()) values_[k.key] = k.default_value;
    }

    static RunConfig parse(const std::string& text, const std::string& origin = "config") {
        RunConfig c;
        std::istringstream in(text);
        std::string line;
        for (std::size_t no = 1; std::getline(in, line); ++no) {
            if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(no) + ": expected 'key = value', got '" + line + "'");
            const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
            try {
                c.set(key, value);
            } catch (const ConfigError& e) {
                throw ConfigError(origin + ":" + std::to_string(no) + ": " + e.what());
            }
        }
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config '" + path.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
        it->second = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
        return it->second;
    }

    std::uint64_t get_u64(const std::string& key) const {
        const auto& v = get(key);
        std::uint64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size())
            throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
        return out;
    }
    std::size_t get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

    double get_double(const std::string& key) const {
        const auto& v = get(key);
        double out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
            throw ConfigError(key + ": expected a number, got '" + v + "'");
        return out;
    }

    bool get_bool(const std::string& key) const {
        const auto& v = get(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError(key + ": expected true or false, got '" + v + "'");
    }

    std::vector<std::uint64_t> get_list(const std::string& key) const { return parse_list(key, get(key)); }

    static std::vector<std::uint64_t> parse_list(const std::string& key, const std::string& v) {
        std::vector<std::uint64_t> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            std::uint64_t x = 0;
            auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
            if (item.empty() || ec != std::errc{} || p != item.data() + item.size())
                throw ConfigError(key + ": expected a comma-separated list of integers, got '" + v + "'");
            out.push_back(x);
        }
        if (out.empty()) throw ConfigError(key + ": list is empty");
        return out;
    }

    /// Every key with its resolved value, in documentation order.
    std::string to_text() const {
        std::ostringstream out;
        for (const auto& k : known_keys()) out << k.key << " = " << values_.at(k.key) << '\n';
        return out.str();
    }

    data::SyntheticSpec synthetic_spec() const {
        data::SyntheticSpec s;
        s.n_train = get_size("n_train");
        s.n_test = get_size("n_test");
        s.image_size = get_size("image_size");
        s.mean_base = get_double("mean_base");
        s.mean_slope = get_double("mean_slope");
        s.std_base = get_double("std_base");
        s.std_slope = get_double("std_slope");
        s.std_floor = get_double("std_floor");
        s.texture_freq_gain = get_double("texture_freq_gain");
        s.texture_base_freq = get_double("texture_base_freq");
        s.texture_amp = get_double("texture_amp");
        s.field_grid = get_size("field_grid");
        s.seed = get_u64("seed");
        s.validate();
        return s;
    }

    train::TrainConfig train_config() const {
        train::TrainConfig c;
        c.epochs = get_size("epochs");
        c.batch_size = get_size("batch_size");
        c.base_lr = get_double("base_lr");
        c.adam.weight_decay = get_double("weight_decay");
        c.adam.beta1 = get_double("momentum");
        c.adam.beta2 = get_double("adam_beta2");
        c.adam.eps = get_double("adam_eps");
        c.seed = get_u64("seed");

        const auto variant = model::encoder_variant_from_string(get("encoder"));
        if (variant == model::EncoderVariant::custom) throw ConfigError("encoder: custom encoders cannot be configured by key");
        c.model.encoder = model::EncoderConfig::preset(variant, get_size("encoder_channels"), get_size("image_size"));
        c.model.head_channels = get_size("head_channels");
        if (c.model.head_channels == 0) throw ConfigError("head_channels: must be positive");
        c.model.mode = model::daa_mode_from_string(get("daa_mode"));
        c.model.code_norm = model::code_norm_from_string(get("code_norm"));

        c.augment.enabled = get_bool("augment");
        c.augment.flip_prob = get_double("aug_flip_prob");
        c.augment.scale_min = get_double("aug_scale_min");
        c.augment.scale_max = get_double("aug_scale_max");
        c.augment.rotate_deg = get_double("aug_rotate_deg");
        c.augment.translate_px = get_double("aug_translate_px");

        c.eval_intervals.clear();
        for (auto v : get_list("eval_intervals")) c.eval_intervals.push_back(static_cast<std::size_t>(v));
        c.template_draws = get_size("template_draws");
        c.validate();
        return c;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace daa::cli
