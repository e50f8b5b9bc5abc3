#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tide/model.hpp"
#include "tide/schedule.hpp"
#include "tide/scenes.hpp"
#include "tide/train.hpp"

namespace tide::sample {

using model::TideModel;
using model::Toggles;

struct Triple {
    Tensor image;  // H x W x 3 in [0,1]
    Tensor depth;  // H x W in [0,1]
    Tensor mask;   // H x W categories
};

enum : uint64_t { kLaneImage = 11, kLaneDepth = 12, kLaneMask = 13 };

// reverse noise for (branch, step) from a counter-based expansion of the
// job seed; reproducible regardless of evaluation order
inline Tensor branch_noise(uint64_t job_seed, uint64_t lane, int step, const std::vector<int64_t>& shape) {
    Rng rng(mix_keys(job_seed, lane, static_cast<uint64_t>(step)));
    return rng.normal_tensor(shape);
}

// Lockstep tri-modal ancestral sampling: one forward_joint per step, one
// ddpm_step per branch, shared timestep sequence.
inline Triple sample_triple(const std::string& caption, int steps, uint64_t seed, TideModel& m,
                            const schedule::NoiseSchedule& sched, Toggles toggles) {
    if (steps < 1 || steps > sched.T) throw std::invalid_argument("sample_triple: steps out of range");
    auto sub = schedule::make_subschedule(sched, steps);
    std::vector<int64_t> shape = {m.cfg.height, m.cfg.width, static_cast<int64_t>(m.cfg.channels)};
    Tensor z_i = branch_noise(seed, kLaneImage, 0, shape);
    Tensor z_d = branch_noise(seed, kLaneDepth, 0, shape);
    Tensor z_m = branch_noise(seed, kLaneMask, 0, shape);
    auto tokens = nn::tokenize(caption, m.text.vocab);
    for (int k = steps; k >= 1; --k) {
        int t_orig = sub.timesteps[k - 1];
        Graph g;
        auto out = m.forward_joint(g, z_i, z_d, z_m, t_orig, tokens, toggles);
        z_i = schedule::ddpm_step(z_i, out.eps_image->value, k, sub.sched, branch_noise(seed, kLaneImage, k, shape));
        z_d = schedule::ddpm_step(z_d, out.eps_depth->value, k, sub.sched, branch_noise(seed, kLaneDepth, k, shape));
        z_m = schedule::ddpm_step(z_m, out.eps_mask->value, k, sub.sched, branch_noise(seed, kLaneMask, k, shape));
    }
    Triple tr;
    tr.image = train::image_from_latent(z_i);
    tr.depth = train::depth_from_latent(z_d);
    tr.mask = train::mask_from_latent(z_m, codec::default_palette());
    return tr;
}

// expand -> sample per job -> write through the scenes dataset format
inline std::vector<scenes::SynthesisJob> batch_synthesize(const std::vector<std::string>& captions, int n_per_caption,
                                                          const std::filesystem::path& out_dir, TideModel& m,
                                                          const schedule::NoiseSchedule& sched, int steps, Toggles toggles,
                                                          uint64_t base_seed, const scenes::DepthRule& rule = {}) {
    auto jobs = scenes::expand_captions(captions, n_per_caption, base_seed);
    std::vector<scenes::Quadruple> records;
    records.reserve(jobs.size());
    for (const auto& job : jobs) {
        Triple tr = sample_triple(job.caption, steps, job.seed, m, sched, toggles);
        records.push_back({std::move(tr.image), std::move(tr.depth), std::move(tr.mask), job.caption});
    }
    scenes::write_dataset(records, out_dir, rule);
    return jobs;
}

}  // namespace tide::sample
