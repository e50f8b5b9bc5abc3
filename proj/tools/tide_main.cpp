// tide: tri-branch text-conditioned diffusion over {image, depth, mask}.
// Single entry point for data generation, two-stage training, sampling,
// synthesis, evaluation, gradient checking, and the component ablation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tide/eval.hpp"
#include "tide/gradcheck_units.hpp"
#include "tide/sample.hpp"
#include "tide/train.hpp"

using namespace tide;
namespace fs = std::filesystem;

namespace {

// TIDE_OUT_DIR supplies the default for every --out flag
std::string default_out(const char* leaf) {
    const char* env = std::getenv("TIDE_OUT_DIR");
    return (fs::path(env ? env : "out") / leaf).string();
}

RunConfig load_run_config(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

std::vector<scenes::Quadruple> dataset_records(const std::string& dir) { return scenes::read_dataset(dir).records; }

// default training corpus when no --data directory is supplied
std::vector<scenes::Quadruple> procedural_data(const RunConfig& cfg, int count) {
    scenes::Grammar g;
    g.height = cfg.model.height;
    g.width = cfg.model.width;
    std::vector<scenes::Quadruple> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(scenes::generate_scene(mix_keys(cfg.seed, 0xda7aULL, static_cast<uint64_t>(i)), g));
    return out;
}

void write_triple(const fs::path& dir, const sample::Triple& tr, const std::string& caption) {
    fs::create_directories(dir);
    io::write_tensor_file(dir / "image.tide", tr.image, io::Dtype::f32);
    io::write_tensor_file(dir / "depth.tide", tr.depth, io::Dtype::f32);
    io::write_tensor_file(dir / "mask.tide", tr.mask, io::Dtype::u8);
    std::ofstream cap(dir / "caption.txt", std::ios::trunc);
    cap << caption << "\n";
}

Tensor floored(const Tensor& t, double lo) {
    Tensor out = t;
    for (auto& v : out.data) v = std::max(v, lo);
    return out;
}

struct VariantScore {
    double mask_image = 0;
    double depth_mask = 0;
};

// train one stage-B variant and score consistency over sampled triples
VariantScore run_variant(const train::StageAState& a, RunConfig cfg, bool ils, bool tan,
                         const std::vector<scenes::Quadruple>& data, const scenes::Grammar& g, int n_samples,
                         int steps, const fs::path& out_dir) {
    cfg.ils = ils;
    cfg.tan = tan;
    cfg.checkpoint_every = 0;
    auto m = train::build_stage_b(a, cfg);
    std::ostringstream sink;
    train::train_stage_b(m, cfg, data, g.palette, out_dir, 0, nullptr, {}, sink);
    auto sched = schedule::make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    VariantScore score;
    int rank_n = 0;
    for (int i = 0; i < n_samples; ++i) {
        const auto& cap = data[i % data.size()].caption;
        auto tr = sample::sample_triple(cap, steps, mix_keys(cfg.seed, 0xab1au, i), m, sched, {ils, tan});
        auto rep = eval::consistency_report(tr.image, tr.depth, tr.mask, g.palette, g.depth_rule);
        score.mask_image += rep.mask_image_agreement;
        if (rep.depth_mask_agreement) {
            score.depth_mask += *rep.depth_mask_agreement;
            ++rank_n;
        }
    }
    score.mask_image /= n_samples;
    score.depth_mask = rank_n ? score.depth_mask / rank_n : 0.0;
    return score;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tri-branch joint diffusion over image/depth/mask"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate a procedural training dataset");
    int gd_seeds = 256, gd_size = 16;
    uint64_t gd_base = 0;
    std::string gd_out = default_out("data");
    gen->add_option("--seeds", gd_seeds, "number of records to generate")->check(CLI::PositiveNumber);
    gen->add_option("--size", gd_size, "square scene size in pixels")->check(CLI::PositiveNumber);
    gen->add_option("--base-seed", gd_base, "seed offset for record generation");
    gen->add_option("--out", gd_out, "output dataset directory");

    // ---- pretrain ----
    auto* pre = app.add_subcommand("pretrain", "stage A: full-parameter text-to-image pretraining");
    std::string pre_cfg, pre_data, pre_out = default_out("stage_a");
    pre->add_option("--config", pre_cfg, "key=value config file");
    pre->add_option("--data", pre_data, "training dataset directory (procedural default when omitted)");
    pre->add_option("--out", pre_out, "checkpoint output directory");

    // ---- train ----
    auto* tr = app.add_subcommand("train", "stage B: joint LoRA+TAN fine-tuning");
    std::string tr_cfg, tr_data, tr_init, tr_resume, tr_out = default_out("stage_b");
    int tr_iters = -1, tr_start = -1, tr_end = -1, tr_stride = -1;
    int64_t tr_seed = -1;
    bool tr_no_ils = false, tr_no_tan = false;
    tr->add_option("--config", tr_cfg, "key=value config file");
    tr->add_option("--data", tr_data, "training dataset directory (procedural default when omitted)");
    tr->add_option("--init", tr_init, "stage-A checkpoint directory");
    tr->add_option("--resume", tr_resume, "stage-B checkpoint to resume from (overrides --init)");
    tr->add_option("--out", tr_out, "checkpoint output directory");
    tr->add_option("--iterations", tr_iters, "stage-B iteration count override");
    tr->add_option("--seed", tr_seed, "seed override");
    tr->add_flag("--no-ils", tr_no_ils, "disable implicit layout sharing");
    tr->add_flag("--no-tan", tr_no_tan, "disable time adaptive normalization");
    tr->add_option("--share-start", tr_start, "first image layer in the share range");
    tr->add_option("--share-end", tr_end, "last image layer in the share range");
    tr->add_option("--share-stride", tr_stride, "image-layer stride between share sites");

    // ---- sample ----
    auto* sa = app.add_subcommand("sample", "sample one aligned (image, depth, mask) triple");
    std::string sa_ckpt, sa_caption = "a fish over a plain seabed", sa_out = default_out("sample");
    uint64_t sa_seed = 0;
    int sa_steps = 0;
    sa->add_option("--checkpoint", sa_ckpt, "stage-B checkpoint directory")->required();
    sa->add_option("--caption", sa_caption, "text prompt");
    sa->add_option("--seed", sa_seed, "sampling seed");
    sa->add_option("--steps", sa_steps, "reverse steps (0 = config value)");
    sa->add_option("--out", sa_out, "output directory for the triple");

    // ---- synthesize ----
    auto* sy = app.add_subcommand("synthesize", "N samples per caption into a dataset");
    std::string sy_ckpt, sy_caps, sy_out = default_out("synth");
    int sy_n = 10, sy_steps = 0;
    uint64_t sy_seed = 0;
    sy->add_option("--checkpoint", sy_ckpt, "stage-B checkpoint directory")->required();
    sy->add_option("--captions-file", sy_caps, "one caption per line")->required();
    sy->add_option("--n", sy_n, "samples per unique caption")->check(CLI::PositiveNumber);
    sy->add_option("--steps", sy_steps, "reverse steps (0 = config value)");
    sy->add_option("--seed", sy_seed, "base seed for job fanout");
    sy->add_option("--out", sy_out, "output dataset directory");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "depth metrics + mIoU between two datasets");
    std::string ev_pred, ev_gt;
    bool ev_align = false;
    ev->add_option("--pred", ev_pred, "predicted dataset directory");
    ev->add_option("--gt", ev_gt, "ground-truth dataset directory");
    ev->add_flag("--median-align", ev_align, "median-scale predictions before depth metrics");
    auto* evc = ev->add_subcommand("consistency", "cross-modal consistency of one dataset");
    std::string evc_data;
    evc->add_option("--dataset", evc_data, "dataset directory")->required();

    // ---- gradcheck ----
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    double gc_tol = 1e-4;
    std::string gc_unit;
    gc->add_option("--tol", gc_tol, "max relative error tolerance");
    gc->add_option("--unit", gc_unit, "single unit to check (default: all)");

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate", "component ablation: both / ils_only / tan_only / neither");
    std::string ab_cfg, ab_out = default_out("ablation.csv");
    int ab_budget = 300, ab_samples = 8;
    ab->add_option("--config", ab_cfg, "key=value config file");
    ab->add_option("--budget", ab_budget, "stage-B iterations per variant")->check(CLI::NonNegativeNumber);
    ab->add_option("--samples", ab_samples, "triples scored per variant")->check(CLI::PositiveNumber);
    ab->add_option("--out", ab_out, "CSV report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            scenes::Grammar g;
            g.height = g.width = gd_size;
            std::vector<scenes::Quadruple> records;
            records.reserve(gd_seeds);
            for (int i = 0; i < gd_seeds; ++i) {
                auto q = scenes::generate_scene(gd_base + static_cast<uint64_t>(i), g);
                auto msg = scenes::validate_quadruple(q, g);
                if (!msg.empty()) throw std::runtime_error("gen-data: invalid record at seed " + std::to_string(i) + ": " + msg);
                records.push_back(std::move(q));
            }
            scenes::write_dataset(records, gd_out, g.depth_rule);
            std::cerr << "wrote " << records.size() << " records to " << gd_out << "\n";
        }

        if (*pre) {
            RunConfig cfg = load_run_config(pre_cfg);
            auto data = pre_data.empty() ? procedural_data(cfg, 256) : dataset_records(pre_data);
            auto final_dir = train::pretrain(cfg, data, pre_out);
            std::cout << final_dir.string() << "\n";
        }

        if (*tr) {
            RunConfig cfg = load_run_config(tr_cfg);
            if (tr_iters >= 0) cfg.stage_b_iters = tr_iters;
            if (tr_seed >= 0) cfg.seed = static_cast<uint64_t>(tr_seed);
            if (tr_no_ils) cfg.ils = false;
            if (tr_no_tan) cfg.tan = false;
            if (tr_start >= 0) cfg.model.share_start = tr_start;
            if (tr_end >= 0) cfg.model.share_end = tr_end;
            if (tr_stride >= 0) cfg.model.share_stride = tr_stride;
            auto data = tr_data.empty() ? procedural_data(cfg, 256) : dataset_records(tr_data);
            fs::path final_dir;
            if (!tr_resume.empty()) {
                auto st = train::load_stage_b(tr_resume);
                if (tr_iters >= 0) st.cfg.stage_b_iters = tr_iters;
                AdamW opt({.lr = st.cfg.lr_stage_b});
                auto params = st.model.all_parameters();
                train::load_adam(tr_resume, opt, params);
                opt.set_step_count(st.adam_step);
                final_dir = train::train_stage_b(st.model, st.cfg, data, codec::default_palette(), tr_out,
                                                 st.next_step, &opt, std::move(st.history));
            } else {
                if (tr_init.empty()) throw std::invalid_argument("train: need --init (stage-A checkpoint) or --resume");
                auto a = train::load_stage_a(tr_init);
                // the stage-A geometry wins; training knobs come from this run
                cfg.model = a.cfg.model;
                if (tr_start >= 0) cfg.model.share_start = tr_start;
                if (tr_end >= 0) cfg.model.share_end = tr_end;
                if (tr_stride >= 0) cfg.model.share_stride = tr_stride;
                auto m = train::build_stage_b(a, cfg);
                final_dir = train::train_stage_b(m, cfg, data, codec::default_palette(), tr_out);
            }
            std::cout << final_dir.string() << "\n";
        }

        if (*sa) {
            auto st = train::load_stage_b(sa_ckpt);
            int steps = sa_steps > 0 ? sa_steps : st.cfg.sample_steps;
            auto sched = schedule::make_linear_schedule(st.cfg.T, st.cfg.beta_start, st.cfg.beta_end);
            auto trp = sample::sample_triple(sa_caption, steps, sa_seed, st.model, sched, {st.cfg.ils, st.cfg.tan});
            write_triple(sa_out, trp, sa_caption);
            std::cerr << "sampled \"" << sa_caption << "\" -> " << sa_out << "\n";
        }

        if (*sy) {
            auto st = train::load_stage_b(sy_ckpt);
            std::ifstream capf(sy_caps);
            if (!capf) throw std::runtime_error("synthesize: cannot open captions file " + sy_caps);
            std::vector<std::string> captions;
            std::string line;
            while (std::getline(capf, line))
                if (!line.empty()) captions.push_back(line);
            if (captions.empty()) throw std::invalid_argument("synthesize: captions file is empty");
            int steps = sy_steps > 0 ? sy_steps : st.cfg.sample_steps;
            auto sched = schedule::make_linear_schedule(st.cfg.T, st.cfg.beta_start, st.cfg.beta_end);
            auto jobs = sample::batch_synthesize(captions, sy_n, sy_out, st.model, sched, steps,
                                                 {st.cfg.ils, st.cfg.tan}, sy_seed);
            std::cerr << "synthesized " << jobs.size() << " records to " << sy_out << "\n";
        }

        if (*ev) {
            if (*evc) {
                auto ds = scenes::read_dataset(evc_data);
                if (ds.records.empty()) throw std::invalid_argument("eval consistency: empty dataset");
                codec::Palette pal = codec::default_palette();
                double mi = 0, dm = 0;
                int n = 0, rank_n = 0, degenerate = 0;
                for (const auto& q : ds.records) {
                    auto rep = eval::consistency_report(q.image, q.depth, q.mask, pal, ds.depth_rule);
                    mi += rep.mask_image_agreement;
                    degenerate += rep.degenerate_mask;
                    if (rep.depth_mask_agreement) {
                        dm += *rep.depth_mask_agreement;
                        ++rank_n;
                    }
                    ++n;
                }
                std::cout << "mean_mask_image_agreement,mean_depth_mask_agreement,samples,degenerate_masks\n";
                std::cout.precision(9);
                std::cout << mi / n << "," << (rank_n ? dm / rank_n : 0.0) << "," << n << "," << degenerate << "\n";
            } else {
                if (ev_pred.empty() || ev_gt.empty()) throw std::invalid_argument("eval: need --pred and --gt (or the consistency subcommand)");
                auto pred = scenes::read_dataset(ev_pred).records;
                auto gt = scenes::read_dataset(ev_gt).records;
                // log-based depth metrics need strictly positive values
                for (auto& q : pred) q.depth = floored(q.depth, 1e-3);
                for (auto& q : gt) q.depth = floored(q.depth, 1e-3);
                auto e = eval::evaluate_datasets(pred, gt, codec::default_palette(), ev_align);
                std::cout << eval::dataset_eval_csv(e);
            }
        }

        if (*gc) {
            auto units = gc_unit.empty() ? gradcheck::all_units() : std::vector<std::string>{gc_unit};
            bool all_pass = true;
            std::cout << "unit,max_rel_err,checked,pass\n";
            for (const auto& u : units) {
                auto rep = gradcheck::run_unit(u, gc_tol);
                std::cout.precision(6);
                std::cout << rep.unit << "," << rep.max_rel_err << "," << rep.checked << "," << (rep.pass ? "pass" : "FAIL") << "\n";
                all_pass = all_pass && rep.pass;
            }
            if (!all_pass) return 1;
        }

        if (*ab) {
            RunConfig cfg = load_run_config(ab_cfg);
            cfg.stage_b_iters = ab_budget;
            scenes::Grammar g;
            g.height = cfg.model.height;
            g.width = cfg.model.width;
            auto data = procedural_data(cfg, 64);
            std::cerr << "[ablate] pretraining shared stage-A base\n";
            auto pre_dir = fs::temp_directory_path() / "tide_ablate_stage_a";
            auto a_final = train::pretrain(cfg, data, pre_dir);
            auto a = train::load_stage_a(a_final);
            struct Row {
                const char* name;
                bool ils, tan;
            } variants[] = {{"both", true, true}, {"ils_only", true, false}, {"tan_only", false, true}, {"neither", false, false}};
            std::vector<eval::AblationRow> rows;
            for (const auto& v : variants) {
                std::cerr << "[ablate] training variant " << v.name << "\n";
                auto tmp = fs::temp_directory_path() / (std::string("tide_ablate_") + v.name);
                auto score = run_variant(a, cfg, v.ils, v.tan, data, g, ab_samples, cfg.sample_steps, tmp);
                rows.push_back({v.name, score.mask_image, score.depth_mask, ab_samples});
            }
            auto csv = eval::ablation_csv(rows);
            std::ofstream out(ab_out, std::ios::trunc);
            if (!out) throw std::runtime_error("ablate: cannot write " + ab_out);
            out << csv;
            std::cout << csv;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
