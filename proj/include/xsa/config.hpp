// Flat key = value experiment configuration ('#' starts a comment, lists are
// comma-separated; exact grammar in docs/config.md). Every key can be
// overridden by a CLI flag.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xsa/error.hpp"
#include "xsa/evaluation.hpp"
#include "xsa/explainers.hpp"

namespace xsa {

struct ExperimentConfig {
    std::string model_dir;
    std::string images_path;
    std::string labels_path;
    std::vector<std::size_t> image_ids;  // empty = first image_count images
    std::size_t image_count = 100;

    std::vector<Method> methods{Method::Lrp};
    std::vector<double> lrp_gammas{0.005, 0.0085, 0.0145, 0.0247, 0.042, 0.0715,
                                   0.122, 0.207, 0.352, 0.599, 1.0};
    bool lrp_zb_first = false;
    std::vector<double> sg_noise{0.05, 0.1, 0.2, 0.4};
    int sg_samples = 10;
    std::vector<int> ig_steps{10};
    std::vector<int> shapley_cycles{25};
    std::size_t shapley_patch = 4;
    double baseline_value = 0.0;

    bool metric_spectral = true;
    bool metric_flip = true;
    bool metric_entropy = true;
    InpaintMethod inpaint = InpaintMethod::Diffusion;
    std::string target_rule = "predicted";  // predicted | label | <index>
    std::vector<std::pair<std::size_t, std::size_t>> bins;  // empty = default_bins(h)
    std::size_t stability_trials = 0;  // extra bound-check samples per matrix

    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::size_t workers = 0;

    void validate() const {
        namespace fs = std::filesystem;
        if (model_dir.empty() || !fs::exists(model_dir))
            throw ConfigError("model path does not exist: " + model_dir);
        if (images_path.empty() || !fs::exists(images_path))
            throw ConfigError("images path does not exist: " + images_path);
        if (!labels_path.empty() && !fs::exists(labels_path))
            throw ConfigError("labels path does not exist: " + labels_path);
        if (methods.empty()) throw ConfigError("no methods selected");
        for (Method m : methods) {
            if (m == Method::Lrp && lrp_gammas.empty())
                throw ConfigError("lrp_gammas must be non-empty");
            if (m == Method::SmoothGrad && sg_noise.empty())
                throw ConfigError("sg_noise must be non-empty");
            if (m == Method::IntegratedGradients && ig_steps.empty())
                throw ConfigError("ig_steps must be non-empty");
            if (m == Method::ShapleySampling && shapley_cycles.empty())
                throw ConfigError("shapley_cycles must be non-empty");
        }
        if (target_rule == "label" && labels_path.empty())
            throw ConfigError("target = label requires a labels path");
    }

    // the parameter grid for one method
    std::vector<double> grid(Method m) const {
        switch (m) {
            case Method::Lrp: return lrp_gammas;
            case Method::SmoothGrad: return sg_noise;
            case Method::IntegratedGradients: {
                std::vector<double> g;
                for (int s : ig_steps) g.push_back(static_cast<double>(s));
                return g;
            }
            case Method::ShapleySampling: {
                std::vector<double> g;
                for (int c : shapley_cycles) g.push_back(static_cast<double>(c));
                return g;
            }
            case Method::GradientXInput: return {0.0};
        }
        return {0.0};
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> items;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                               const std::string& value) {
    const auto to_doubles = [&] {
        std::vector<double> out;
        for (const auto& item : detail::split_list(value)) out.push_back(std::stod(item));
        return out;
    };
    const auto to_ints = [&] {
        std::vector<int> out;
        for (const auto& item : detail::split_list(value)) out.push_back(std::stoi(item));
        return out;
    };

    if (key == "model") cfg.model_dir = value;
    else if (key == "images") cfg.images_path = value;
    else if (key == "labels") cfg.labels_path = value;
    else if (key == "image_ids") {
        cfg.image_ids.clear();
        for (const auto& item : detail::split_list(value))
            cfg.image_ids.push_back(std::stoul(item));
    } else if (key == "image_count") cfg.image_count = std::stoul(value);
    else if (key == "methods") {
        cfg.methods.clear();
        for (const auto& item : detail::split_list(value))
            cfg.methods.push_back(method_from_name(item));
    } else if (key == "lrp_gammas") cfg.lrp_gammas = to_doubles();
    else if (key == "lrp_zb_first") cfg.lrp_zb_first = value == "true" || value == "1";
    else if (key == "sg_noise") cfg.sg_noise = to_doubles();
    else if (key == "sg_samples") cfg.sg_samples = std::stoi(value);
    else if (key == "ig_steps") cfg.ig_steps = to_ints();
    else if (key == "shapley_cycles") cfg.shapley_cycles = to_ints();
    else if (key == "shapley_patch") cfg.shapley_patch = std::stoul(value);
    else if (key == "baseline_value") cfg.baseline_value = std::stod(value);
    else if (key == "metrics") {
        cfg.metric_spectral = cfg.metric_flip = cfg.metric_entropy = false;
        for (const auto& item : detail::split_list(value)) {
            if (item == "spectral") cfg.metric_spectral = true;
            else if (item == "flip") cfg.metric_flip = true;
            else if (item == "entropy") cfg.metric_entropy = true;
            else throw ConfigError("unknown metric: " + item);
        }
    } else if (key == "inpaint") cfg.inpaint = inpaint_from_name(value);
    else if (key == "target") cfg.target_rule = value;
    else if (key == "bins") {
        cfg.bins.clear();
        for (const auto& item : detail::split_list(value)) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("bins must be lo:hi pairs");
            cfg.bins.emplace_back(std::stoul(item.substr(0, colon)),
                                  std::stoul(item.substr(colon + 1)));
        }
    } else if (key == "stability_trials") cfg.stability_trials = std::stoul(value);
    else if (key == "out") cfg.out_dir = value;
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "workers") cfg.workers = std::stoul(value);
    else throw ConfigError("unknown config key: " + key);
}

inline ExperimentConfig load_config(const std::string& path) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : parse_key_values(path)) {
        try {
            apply_config_entry(cfg, key, value);
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad value for " + key + ": " + value);
        } catch (const std::out_of_range&) {
            throw ConfigError("value out of range for " + key + ": " + value);
        }
    }
    return cfg;
}

}  // namespace xsa
