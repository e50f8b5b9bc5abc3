#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "tide/model.hpp"

namespace tide {

// Everything a run needs, loadable from a plain-text key=value file; CLI
// flags override file values.
struct RunConfig {
    model::ModelConfig model;

    // schedule
    int T = 100;
    double beta_start = 5e-3;   // scaled up from the classic [1e-4, 0.02] so that
    double beta_end = 0.15;     // alpha_bar(T) ~ 3e-4 at T=100 (prior actually reached)

    // training
    int stage_a_iters = 6000;
    int mini_iters = 1200;
    int stage_b_iters = 4000;
    int batch = 8;
    double lr_stage_a = 2e-3;
    double lr_stage_b = 2e-3;
    uint64_t seed = 0;
    bool ils = true;
    bool tan = true;
    int checkpoint_every = 1000;

    // sampling
    int sample_steps = 50;
};

inline std::map<std::string, std::string> config_to_map(const RunConfig& c) {
    std::map<std::string, std::string> m;
    auto put = [&](const std::string& k, auto v) {
        std::ostringstream ss;
        ss.precision(17);
        ss << v;
        m[k] = ss.str();
    };
    put("model.height", c.model.height);
    put("model.width", c.model.width);
    put("model.channels", c.model.channels);
    put("model.patch", c.model.patch);
    put("model.c", c.model.c);
    put("model.image_layers", c.model.image_layers);
    put("model.mini_layers", c.model.mini_layers);
    put("model.ff_mult", c.model.ff_mult);
    put("model.share_start", c.model.share_start);
    put("model.share_end", c.model.share_end);
    put("model.share_stride", c.model.share_stride);
    put("model.lora_rank_image", c.model.lora_rank_image);
    put("model.lora_rank_depth", c.model.lora_rank_depth);
    put("model.lora_rank_mask", c.model.lora_rank_mask);
    put("model.lora_scale", c.model.lora_scale);
    put("model.max_text_len", c.model.max_text_len);
    put("schedule.T", c.T);
    put("schedule.beta_start", c.beta_start);
    put("schedule.beta_end", c.beta_end);
    put("train.stage_a_iters", c.stage_a_iters);
    put("train.mini_iters", c.mini_iters);
    put("train.stage_b_iters", c.stage_b_iters);
    put("train.batch", c.batch);
    put("train.lr_stage_a", c.lr_stage_a);
    put("train.lr_stage_b", c.lr_stage_b);
    put("train.seed", c.seed);
    put("train.ils", c.ils ? 1 : 0);
    put("train.tan", c.tan ? 1 : 0);
    put("train.checkpoint_every", c.checkpoint_every);
    put("sample.steps", c.sample_steps);
    return m;
}

inline void config_apply(RunConfig& c, const std::map<std::string, std::string>& m) {
    auto geti = [&](const std::string& k, auto& out) {
        auto it = m.find(k);
        if (it == m.end()) return;
        std::istringstream ss(it->second);
        ss >> out;
        if (ss.fail()) throw std::invalid_argument("config: bad value for " + k + ": " + it->second);
    };
    geti("model.height", c.model.height);
    geti("model.width", c.model.width);
    geti("model.channels", c.model.channels);
    geti("model.patch", c.model.patch);
    geti("model.c", c.model.c);
    geti("model.image_layers", c.model.image_layers);
    geti("model.mini_layers", c.model.mini_layers);
    geti("model.ff_mult", c.model.ff_mult);
    geti("model.share_start", c.model.share_start);
    geti("model.share_end", c.model.share_end);
    geti("model.share_stride", c.model.share_stride);
    geti("model.lora_rank_image", c.model.lora_rank_image);
    geti("model.lora_rank_depth", c.model.lora_rank_depth);
    geti("model.lora_rank_mask", c.model.lora_rank_mask);
    geti("model.lora_scale", c.model.lora_scale);
    geti("model.max_text_len", c.model.max_text_len);
    geti("schedule.T", c.T);
    geti("schedule.beta_start", c.beta_start);
    geti("schedule.beta_end", c.beta_end);
    geti("train.stage_a_iters", c.stage_a_iters);
    geti("train.mini_iters", c.mini_iters);
    geti("train.stage_b_iters", c.stage_b_iters);
    geti("train.batch", c.batch);
    geti("train.lr_stage_a", c.lr_stage_a);
    geti("train.lr_stage_b", c.lr_stage_b);
    geti("train.seed", c.seed);
    int flag;
    flag = c.ils ? 1 : 0;
    geti("train.ils", flag);
    c.ils = flag != 0;
    flag = c.tan ? 1 : 0;
    geti("train.tan", flag);
    c.tan = flag != 0;
    geti("train.checkpoint_every", c.checkpoint_every);
    geti("sample.steps", c.sample_steps);
}

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> m;
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
        if (!k.empty()) m[k] = v;
    }
    return m;
}

inline void write_kv_file(const std::string& path, const std::map<std::string, std::string>& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write config file: " + path);
    for (auto& [k, v] : m) f << k << "=" << v << "\n";
}

inline RunConfig load_config(const std::string& path) {
    RunConfig c;
    config_apply(c, parse_kv_file(path));
    return c;
}

}  // namespace tide
