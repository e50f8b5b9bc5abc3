#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tide/config.hpp"
#include "tide/io.hpp"
#include "tide/model.hpp"
#include "tide/schedule.hpp"
#include "tide/scenes.hpp"

namespace tide::train {

namespace fs = std::filesystem;
using ad::Var;

// ---- modality encoding for the denoiser ----

// all branches consume H x W x 3 latents in [-1,1]; depth is replicated
// across channels so the image-pretrained patch embedding remains usable
inline Tensor image_latent(const Tensor& image) {
    Tensor z(image.shape);
    for (int64_t i = 0; i < z.numel(); ++i) z[i] = 2.0 * image[i] - 1.0;
    return z;
}

inline Tensor depth_latent(const Tensor& depth) {
    Tensor enc = codec::encode_depth(depth);
    int64_t H = enc.shape[0], W = enc.shape[1];
    Tensor z({H, W, 3});
    for (int64_t i = 0; i < H * W; ++i)
        for (int k = 0; k < 3; ++k) z[i * 3 + k] = enc[i];
    return z;
}

inline Tensor mask_latent(const Tensor& mask, const codec::Palette& p) { return codec::encode_mask(mask, p); }

inline Tensor image_from_latent(const Tensor& z) {
    Tensor img(z.shape);
    for (int64_t i = 0; i < z.numel(); ++i) img[i] = std::clamp(0.5 * (z[i] + 1.0), 0.0, 1.0);
    return img;
}

inline Tensor depth_from_latent(const Tensor& z) {
    int64_t H = z.shape[0], W = z.shape[1];
    Tensor mono({H, W});
    for (int64_t i = 0; i < H * W; ++i) mono[i] = (z[i * 3] + z[i * 3 + 1] + z[i * 3 + 2]) / 3.0;
    return codec::decode_depth(mono);
}

inline Tensor mask_from_latent(const Tensor& z, const codec::Palette& p) { return codec::decode_mask(z, p); }

// ---- losses ----

inline Var denoising_loss(const Var& eps_hat, const Tensor& eps) { return ad::mse(eps_hat, ad::constant(eps)); }

inline double denoising_loss(const Tensor& eps_hat, const Tensor& eps) {
    check_same_shape(eps_hat, eps, "denoising_loss");
    double acc = 0.0;
    for (int64_t i = 0; i < eps.numel(); ++i) {
        double d = eps_hat[i] - eps[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps.numel());
}

// ---- deterministic draw helpers (stateless in the step counter) ----

inline int64_t shuffled_index(uint64_t seed, int64_t counter, int64_t n) {
    int64_t epoch = counter / n, pos = counter % n;
    // Fisher-Yates position lookup via a per-epoch keyed permutation walk
    // would need the whole permutation; a keyed affine walk over a hash is
    // enough here: draw without obvious ordering, deterministic, stateless.
    return static_cast<int64_t>(mix_keys(seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(pos)) % static_cast<uint64_t>(n));
}

inline Rng step_rng(uint64_t seed, uint64_t lane, int64_t step, int64_t sample) {
    return Rng(mix_keys(mix_keys(seed, lane), static_cast<uint64_t>(step), static_cast<uint64_t>(sample)));
}

// ---- checkpoints ----
// A checkpoint is a directory of named .tide tensor files (float64), Adam
// moment files for trainable tensors, meta.json, and loss_history.csv.

inline std::string tensor_filename(const std::string& param_name) { return param_name + ".tide"; }

inline void save_params(const fs::path& dir, const std::vector<Param*>& params) {
    fs::create_directories(dir);
    for (const Param* p : params) io::write_tensor_file(dir / tensor_filename(p->name), p->value, io::Dtype::f64);
}

inline void load_params(const fs::path& dir, const std::vector<Param*>& params) {
    for (Param* p : params) {
        Tensor t = io::read_tensor_file(dir / tensor_filename(p->name));
        if (t.shape != p->value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + p->name + ": " + shape_str(t) + " vs " + shape_str(p->value));
        p->value = std::move(t);
        p->grad = Tensor::zeros(p->value.shape);
    }
}

inline void save_adam(const fs::path& dir, AdamW& opt, const std::vector<Param*>& params) {
    auto& st = opt.state();
    for (Param* p : params) {
        if (!p->trainable) continue;
        auto it = st.find(p);
        Tensor m = it != st.end() && it->second.m.shape == p->value.shape ? it->second.m : Tensor::zeros(p->value.shape);
        Tensor v = it != st.end() && it->second.v.shape == p->value.shape ? it->second.v : Tensor::zeros(p->value.shape);
        io::write_tensor_file(dir / (p->name + ".adam_m.tide"), m, io::Dtype::f64);
        io::write_tensor_file(dir / (p->name + ".adam_v.tide"), v, io::Dtype::f64);
    }
}

inline void load_adam(const fs::path& dir, AdamW& opt, const std::vector<Param*>& params) {
    for (Param* p : params) {
        if (!p->trainable) continue;
        auto mf = dir / (p->name + ".adam_m.tide");
        if (!fs::exists(mf)) continue;
        auto& st = opt.state()[p];
        st.m = io::read_tensor_file(mf);
        st.v = io::read_tensor_file(dir / (p->name + ".adam_v.tide"));
    }
}

struct LossRecord {
    int64_t step = 0;
    double image = 0, depth = 0, mask = 0, total = 0;
};

inline void save_loss_history(const fs::path& dir, const std::vector<LossRecord>& hist) {
    std::ofstream f(dir / "loss_history.csv", std::ios::trunc);
    f << "step,loss_image,loss_depth,loss_mask,loss_total\n";
    f.precision(17);
    for (const auto& r : hist) f << r.step << "," << r.image << "," << r.depth << "," << r.mask << "," << r.total << "\n";
}

inline std::vector<LossRecord> load_loss_history(const fs::path& dir) {
    std::vector<LossRecord> hist;
    std::ifstream f(dir / "loss_history.csv");
    if (!f) return hist;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        LossRecord r;
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &r.step, &r.image, &r.depth, &r.mask, &r.total) == 5) hist.push_back(r);
    }
    return hist;
}

inline void save_meta(const fs::path& dir, const nlohmann::json& meta) {
    std::ofstream f(dir / "meta.json", std::ios::trunc);
    f << meta.dump(2) << "\n";
}

inline nlohmann::json load_meta(const fs::path& dir) {
    std::ifstream f(dir / "meta.json");
    if (!f) throw std::runtime_error("checkpoint: missing meta.json in " + dir.string());
    nlohmann::json j;
    f >> j;
    return j;
}

inline nlohmann::json config_json(const RunConfig& cfg) {
    nlohmann::json j;
    for (auto& [k, v] : config_to_map(cfg)) j[k] = v;
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    std::map<std::string, std::string> m;
    for (auto& [k, v] : j.items()) m[k] = v.get<std::string>();
    RunConfig c;
    config_apply(c, m);
    return c;
}

// ---- stage A: full-parameter toy pretraining on text-to-image ----

struct StageAState {
    RunConfig cfg;
    model::TextEncoder text;
    model::Branch image;
    model::Branch mini;

    std::vector<Param*> all_parameters() {
        std::vector<Param*> out;
        out.push_back(&text.embed);
        out.push_back(&text.positions);
        image.collect(out);
        mini.collect(out);
        return out;
    }
};

inline StageAState build_stage_a(const RunConfig& cfg) {
    Rng rng(mix_keys(cfg.seed, 0x71de3a0de1ULL));
    StageAState st{cfg, model::TextEncoder(nn::default_vocab(), cfg.model.c, cfg.model.max_text_len, rng, "text"),
                   model::Branch(cfg.model, cfg.model.image_layers, rng, "image"),
                   model::Branch(cfg.model, cfg.model.mini_layers, rng, "mini")};
    return st;
}

// one text-to-image step over a branch; returns the batch-mean loss
inline double t2i_step(model::Branch& branch, model::TextEncoder& text, const std::vector<scenes::Quadruple>& data,
                       const schedule::NoiseSchedule& sched, AdamW& opt, std::vector<Param*>& trainables,
                       std::vector<Param*>& all, uint64_t seed, int64_t step, int batch, uint64_t lane) {
    for (Param* p : all) p->zero_grad();
    double loss_acc = 0.0;
    for (int b = 0; b < batch; ++b) {
        int64_t idx = shuffled_index(mix_keys(seed, lane), step * batch + b, static_cast<int64_t>(data.size()));
        const auto& q = data[idx];
        Rng rng = step_rng(seed, lane, step, b);
        int t = static_cast<int>(rng.uniform_int(1, sched.T));
        Tensor z0 = image_latent(q.image);
        Tensor eps = rng.normal_tensor(z0.shape);
        Tensor zt = schedule::q_sample(z0, t, eps, sched);
        Graph g;
        Var ctx = text.encode(g, nn::tokenize(q.caption, text.vocab));
        Var eps_hat = branch.forward(g, zt, t, ctx);
        Var loss = denoising_loss(eps_hat, eps);
        double lv = loss->value[0];
        if (!std::isfinite(lv)) throw std::runtime_error("t2i_step: non-finite loss at step " + std::to_string(step));
        loss_acc += lv;
        g.backward(loss);
    }
    double inv = 1.0 / batch;
    for (Param* p : trainables)
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= inv;
    opt.step(trainables);
    return loss_acc * inv;
}

inline void save_stage_a(const fs::path& dir, StageAState& st, int64_t step, const std::vector<LossRecord>& hist) {
    fs::create_directories(dir);
    auto params = st.all_parameters();
    save_params(dir, params);
    nlohmann::json meta = {{"stage", "A"}, {"next_step", step}, {"config", config_json(st.cfg)}};
    save_meta(dir, meta);
    save_loss_history(dir, hist);
}

inline StageAState load_stage_a(const fs::path& dir) {
    auto meta = load_meta(dir);
    if (meta.at("stage") != "A") throw std::runtime_error("checkpoint at " + dir.string() + " is not a stage-A checkpoint");
    RunConfig cfg = config_from_json(meta.at("config"));
    StageAState st = build_stage_a(cfg);
    auto params = st.all_parameters();
    load_params(dir, params);
    return st;
}

// Full stage-A run: image-branch pretraining, then mini-branch
// initialization from the first k image layers and its own pretraining.
inline fs::path pretrain(const RunConfig& cfg, const std::vector<scenes::Quadruple>& data, const fs::path& out_dir,
                         std::ostream& log = std::cerr) {
    if (data.empty()) throw std::invalid_argument("pretrain: empty dataset");
    StageAState st = build_stage_a(cfg);
    auto sched = schedule::make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    std::vector<LossRecord> hist;

    // image branch + text encoder, full parameter
    {
        std::vector<Param*> trainables;
        trainables.push_back(&st.text.embed);
        trainables.push_back(&st.text.positions);
        st.image.collect(trainables);
        std::vector<Param*> all = st.all_parameters();
        AdamW opt({.lr = cfg.lr_stage_a});
        for (int64_t step = 0; step < cfg.stage_a_iters; ++step) {
            double l = t2i_step(st.image, st.text, data, sched, opt, trainables, all, cfg.seed, step, cfg.batch, /*lane=*/1);
            hist.push_back({step, l, 0, 0, l});
            if (step % 200 == 0) log << "[pretrain/image] step " << step << " loss " << l << "\n";
        }
    }

    // mini branch: truncated copy of the image branch, then its own
    // text-to-image training with the text encoder frozen
    st.mini = model::init_mini_from_image(st.image, cfg.model.mini_layers, "mini");
    {
        std::vector<Param*> trainables;
        st.mini.collect(trainables);
        std::vector<Param*> all = st.all_parameters();
        AdamW opt({.lr = cfg.lr_stage_a});
        for (int64_t step = 0; step < cfg.mini_iters; ++step) {
            double l = t2i_step(st.mini, st.text, data, sched, opt, trainables, all, cfg.seed, step, cfg.batch, /*lane=*/2);
            hist.push_back({cfg.stage_a_iters + step, l, 0, 0, l});
            if (step % 200 == 0) log << "[pretrain/mini] step " << step << " loss " << l << "\n";
        }
    }

    fs::path final_dir = out_dir / "final";
    save_stage_a(final_dir, st, cfg.stage_a_iters + cfg.mini_iters, hist);
    return final_dir;
}

// ---- stage B: joint LoRA+TAN fine-tuning ----

// assemble the tri-branch model from a stage-A checkpoint
inline model::TideModel build_stage_b(const StageAState& a, const RunConfig& cfg) {
    model::TideModel m;
    m.cfg = cfg.model;
    Rng rng(mix_keys(cfg.seed, 0xb5744eb10cauLL));
    m.text = a.text;
    m.image = a.image;
    m.image.prefix = "image";
    m.depth = model::init_mini_from_image(a.mini, a.mini.layer_count(), "depth");
    m.mask = model::init_mini_from_image(a.mini, a.mini.layer_count(), "mask");
    m.share_map = model::build_share_map(cfg.model.image_layers, cfg.model.mini_layers, cfg.model.share_start,
                                         cfg.model.share_end, cfg.model.share_stride);
    m.rebuild_tan_sites(rng);
    m.attach_all_lora(rng);
    m.apply_stage_b_freeze();
    return m;
}

struct StepReport {
    double loss_image = 0, loss_depth = 0, loss_mask = 0, loss_total = 0;
};

// One joint training step: shared timestep per sample, independent noise
// per modality, unweighted three-term loss in fixed order.
inline StepReport joint_step(model::TideModel& m, const std::vector<scenes::Quadruple>& data,
                             const schedule::NoiseSchedule& sched, AdamW& opt, std::vector<Param*>& trainables,
                             std::vector<Param*>& all, const RunConfig& cfg, int64_t step,
                             const codec::Palette& palette) {
    if (data.empty()) throw std::invalid_argument("joint_step: empty batch source");
    for (Param* p : all) p->zero_grad();
    StepReport rep;
    model::Toggles toggles{cfg.ils, cfg.tan};
    for (int b = 0; b < cfg.batch; ++b) {
        int64_t idx = shuffled_index(mix_keys(cfg.seed, 3ULL), step * cfg.batch + b, static_cast<int64_t>(data.size()));
        const auto& q = data[idx];
        Rng rng = step_rng(cfg.seed, /*lane=*/3, step, b);
        int t = static_cast<int>(rng.uniform_int(1, sched.T));  // one shared timestep per sample
        Tensor z0_i = image_latent(q.image);
        Tensor z0_d = depth_latent(q.depth);
        Tensor z0_m = mask_latent(q.mask, palette);
        Tensor eps_i = rng.normal_tensor(z0_i.shape);
        Tensor eps_d = rng.normal_tensor(z0_d.shape);
        Tensor eps_m = rng.normal_tensor(z0_m.shape);
        Graph g;
        auto out = m.forward_joint(g, schedule::q_sample(z0_i, t, eps_i, sched), schedule::q_sample(z0_d, t, eps_d, sched),
                                   schedule::q_sample(z0_m, t, eps_m, sched), t, nn::tokenize(q.caption, m.text.vocab), toggles);
        Var li = denoising_loss(out.eps_image, eps_i);
        Var ld = denoising_loss(out.eps_depth, eps_d);
        Var lm = denoising_loss(out.eps_mask, eps_m);
        Var total = ad::add(ad::add(li, ld), lm);  // literal three-term sum, fixed order
        if (!std::isfinite(total->value[0]))
            throw std::runtime_error("joint_step: non-finite loss at step " + std::to_string(step) + " (sample " +
                                     std::to_string(idx) + ", t=" + std::to_string(t) + ")");
        rep.loss_image += li->value[0];
        rep.loss_depth += ld->value[0];
        rep.loss_mask += lm->value[0];
        g.backward(total);
    }
    double inv = 1.0 / cfg.batch;
    rep.loss_image *= inv;
    rep.loss_depth *= inv;
    rep.loss_mask *= inv;
    rep.loss_total = rep.loss_image + rep.loss_depth + rep.loss_mask;
    for (Param* p : trainables)
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= inv;
    opt.step(trainables);
    return rep;
}

inline void save_stage_b(const fs::path& dir, model::TideModel& m, const RunConfig& cfg, AdamW& opt, int64_t next_step,
                         const std::vector<LossRecord>& hist) {
    fs::create_directories(dir);
    auto params = m.all_parameters();
    save_params(dir, params);
    save_adam(dir, opt, params);
    nlohmann::json meta = {{"stage", "B"},
                           {"next_step", next_step},
                           {"adam_step", opt.step_count()},
                           {"rng", {{"seed", cfg.seed}, {"stateless", true}}},
                           {"config", config_json(cfg)}};
    save_meta(dir, meta);
    save_loss_history(dir, hist);
}

struct StageBState {
    model::TideModel model;
    RunConfig cfg;
    int64_t next_step = 0;
    int64_t adam_step = 0;
    std::vector<LossRecord> history;
};

inline StageBState load_stage_b(const fs::path& dir) {
    auto meta = load_meta(dir);
    if (meta.at("stage") != "B") throw std::runtime_error("checkpoint at " + dir.string() + " is not a stage-B checkpoint");
    StageBState st;
    st.cfg = config_from_json(meta.at("config"));
    // rebuild an identically-shaped model, then overwrite every tensor
    StageAState a = build_stage_a(st.cfg);
    st.model = build_stage_b(a, st.cfg);
    auto params = st.model.all_parameters();
    load_params(dir, params);
    st.next_step = meta.at("next_step").get<int64_t>();
    st.adam_step = meta.value("adam_step", int64_t{0});
    st.history = load_loss_history(dir);
    return st;
}

inline fs::path train_stage_b(model::TideModel& m, const RunConfig& cfg, const std::vector<scenes::Quadruple>& data,
                              const codec::Palette& palette, const fs::path& out_dir, int64_t start_step,
                              AdamW* opt_in, std::vector<LossRecord> hist, std::ostream& log);

// continue a stage-B run from a checkpoint; bit-identical to never stopping
inline fs::path resume_stage_b(const fs::path& checkpoint, const std::vector<scenes::Quadruple>& data,
                               const codec::Palette& palette, const fs::path& out_dir, std::ostream& log = std::cerr) {
    StageBState st = load_stage_b(checkpoint);
    AdamW opt({.lr = st.cfg.lr_stage_b});
    auto params = st.model.all_parameters();
    load_adam(checkpoint, opt, params);
    opt.set_step_count(st.adam_step);
    return train_stage_b(st.model, st.cfg, data, palette, out_dir, st.next_step, &opt, std::move(st.history), log);
}

// stage-B driver: runs [start_step, cfg.stage_b_iters), checkpoints at
// cadence, writes a `final` checkpoint with full config + history
inline fs::path train_stage_b(model::TideModel& m, const RunConfig& cfg, const std::vector<scenes::Quadruple>& data,
                              const codec::Palette& palette, const fs::path& out_dir, int64_t start_step = 0,
                              AdamW* opt_in = nullptr, std::vector<LossRecord> hist = {}, std::ostream& log = std::cerr) {
    auto sched = schedule::make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    auto trainables = m.trainable_parameters();
    auto all = m.all_parameters();
    AdamW local_opt({.lr = cfg.lr_stage_b});
    AdamW& opt = opt_in ? *opt_in : local_opt;
    if (start_step == 0) save_stage_b(out_dir / "step_000000", m, cfg, opt, 0, hist);
    for (int64_t step = start_step; step < cfg.stage_b_iters; ++step) {
        auto rep = joint_step(m, data, sched, opt, trainables, all, cfg, step, palette);
        hist.push_back({step, rep.loss_image, rep.loss_depth, rep.loss_mask, rep.loss_total});
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.stage_b_iters) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "step_%06lld", static_cast<long long>(step + 1));
            save_stage_b(out_dir / buf, m, cfg, opt, step + 1, hist);
        }
        if (step % 200 == 0)
            log << "[train] step " << step << " total " << rep.loss_total << " (i " << rep.loss_image << " d "
                << rep.loss_depth << " m " << rep.loss_mask << ")\n";
    }
    fs::path final_dir = out_dir / "final";
    save_stage_b(final_dir, m, cfg, opt, cfg.stage_b_iters, hist);
    return final_dir;
}

}  // namespace tide::train
