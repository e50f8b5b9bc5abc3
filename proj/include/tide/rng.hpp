#pragma once

#include <cmath>
#include <cstdint>

#include "tide/tensor.hpp"

namespace tide {

// splitmix64 finalizer; used both as a stream seeder and a key mixer so
// that noise streams can be derived statelessly from (seed, step, lane)
// tuples. Counter-based streams make checkpoint resume bit-exact.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_keys(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }
inline uint64_t mix_keys(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix_keys(a, b) ^ mix64(c ^ 0x5851f42d4c957f2dULL)); }

// Small deterministic generator (xorshift-mixed counter). Not a stdlib
// engine on purpose: stdlib distributions are implementation-defined and
// this project pins bit-reproducibility into its acceptance tests.
class Rng {
   public:
    explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0x853c49e6748fea9bULL)), counter_(0) {}

    uint64_t next_u64() { return mix_keys(state_, ++counter_); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo + 1);
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    // Box-Muller; draws two uniforms per call, no cached state.
    double normal() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    Tensor normal_tensor(std::vector<int64_t> shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data) v = stddev * normal();
        return t;
    }

    Tensor uniform_tensor(std::vector<int64_t> shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (auto& v : t.data) v = uniform(lo, hi);
        return t;
    }

    uint64_t state() const { return state_; }
    uint64_t counter() const { return counter_; }
    void restore(uint64_t state, uint64_t counter) {
        state_ = state;
        counter_ = counter;
    }

   private:
    uint64_t state_;
    uint64_t counter_;
};

}  // namespace tide
