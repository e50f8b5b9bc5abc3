#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tide/tensor.hpp"

namespace tide::schedule {

// Forward-process coefficients. Timesteps are 1-indexed; alpha_bar(0) == 1
// is the "clean data" convention, so alpha_bars has T+1 entries.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // betas[t-1] = beta_t, t in 1..T
    std::vector<double> alphas;      // alphas[t-1] = 1 - beta_t
    std::vector<double> alpha_bars;  // alpha_bars[t] = prod_{s<=t} alpha_s, alpha_bars[0] = 1

    double beta(int t) const { return betas.at(t - 1); }
    double alpha(int t) const { return alphas.at(t - 1); }
    double alpha_bar(int t) const { return alpha_bars.at(t); }

    void check_t(int t) const {
        if (t < 1 || t > T) throw std::out_of_range("timestep out of range: " + std::to_string(t));
    }
};

inline NoiseSchedule from_betas(std::vector<double> betas) {
    if (betas.empty()) throw std::invalid_argument("schedule: T must be >= 1");
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.betas = std::move(betas);
    s.alphas.resize(s.T);
    s.alpha_bars.resize(s.T + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= s.T; ++t) {
        double b = s.betas[t - 1];
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta_t must lie in (0,1)");
        s.alphas[t - 1] = 1.0 - b;
        s.alpha_bars[t] = s.alpha_bars[t - 1] * s.alphas[t - 1];
    }
    return s;
}

inline NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(T);
    for (int i = 0; i < T; ++i)
        betas[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
    return from_betas(std::move(betas));
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps. t = 0 returns z0.
inline Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    check_same_shape(z0, eps, "q_sample");
    if (t == 0) return z0;
    s.check_t(t);
    double ab = s.alpha_bar(t);
    double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    Tensor out(z0.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = c0 * z0[i] + c1 * eps[i];
    return out;
}

inline double posterior_sigma(const NoiseSchedule& s, int t) {
    s.check_t(t);
    if (t == 1) return 0.0;
    double var = s.beta(t) * (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t));
    return std::sqrt(var);
}

// Ancestral reverse step with the posterior variance; deterministic at t=1.
inline Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s, const Tensor& noise) {
    check_same_shape(z_t, eps_hat, "ddpm_step");
    s.check_t(t);
    double bt = s.beta(t);
    double ab = s.alpha_bar(t);
    double at = s.alpha(t);
    double eps_coef = bt / std::sqrt(1.0 - ab);
    double inv_sqrt_a = 1.0 / std::sqrt(at);
    double sigma = posterior_sigma(s, t);
    Tensor out(z_t.shape);
    if (sigma > 0.0) {
        check_same_shape(z_t, noise, "ddpm_step noise");
        for (int64_t i = 0; i < out.numel(); ++i)
            out[i] = inv_sqrt_a * (z_t[i] - eps_coef * eps_hat[i]) + sigma * noise[i];
    } else {
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = inv_sqrt_a * (z_t[i] - eps_coef * eps_hat[i]);
    }
    return out;
}

// Evenly spaced timestep subset with retimed coefficients: the sub-chain's
// beta'_k follows from the ratio of consecutive selected alpha_bars, so
// q_sample at a selected step agrees with the full schedule.
struct SubSchedule {
    NoiseSchedule sched;          // retimed coefficients, k in 1..steps
    std::vector<int> timesteps;   // original t per sub-step k (1-indexed, ascending)
};

inline SubSchedule make_subschedule(const NoiseSchedule& s, int steps) {
    if (steps < 1 || steps > s.T) throw std::invalid_argument("make_subschedule: steps must lie in [1, T]");
    std::vector<int> ts(steps);
    for (int k = 0; k < steps; ++k) {
        // last selected step is always T
        ts[k] = steps == 1 ? s.T : 1 + static_cast<int>(std::llround(static_cast<double>(k) * (s.T - 1) / (steps - 1)));
    }
    std::vector<double> betas(steps);
    double prev = 1.0;
    for (int k = 0; k < steps; ++k) {
        double ab = s.alpha_bar(ts[k]);
        double beta = 1.0 - ab / prev;
        // clamp away from the open-interval endpoints
        betas[k] = std::min(std::max(beta, 1e-12), 1.0 - 1e-12);
        prev = ab;
    }
    SubSchedule sub;
    sub.sched = from_betas(std::move(betas));
    sub.timesteps = std::move(ts);
    return sub;
}

}  // namespace tide::schedule
