#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "tide/autodiff.hpp"
#include "tide/tensor.hpp"

namespace tide {

// A named, persistent weight tensor. Gradients accumulate into `grad`
// across the per-sample graphs of a batch; the optimizer consumes them.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) { grad = Tensor::zeros(value.shape); }

    void zero_grad() { grad.fill(0.0); }
};

// Per-forward graph context. Caches one leaf Var per Param so a weight used
// at several sites accumulates correctly, and flushes leaf gradients back
// into Param::grad in first-use order after the backward sweep.
class Graph {
   public:
    // non-trainable input tensor
    ad::Var input(Tensor t) { return ad::make_var(std::move(t), false); }

    ad::Var leaf(Param& p) {
        auto it = leaves_.find(&p);
        if (it != leaves_.end()) return it->second;
        auto v = ad::make_var(p.value, p.trainable);
        leaves_.emplace(&p, v);
        order_.push_back(&p);
        return v;
    }

    // backward + flush into Param::grad (+=)
    void backward(const ad::Var& loss) {
        ad::backward(loss);
        for (Param* p : order_) {
            auto& v = leaves_[p];
            if (!v->requires_grad || v->grad.shape != v->value.shape) continue;
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += v->grad[i];
        }
    }

   private:
    std::unordered_map<Param*, ad::Var> leaves_;
    std::vector<Param*> order_;
};

// Adam with decoupled weight decay; updates run in the fixed order of the
// parameter list passed in, keeping training bit-deterministic.
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class AdamW {
   public:
    using Config = AdamConfig;

    explicit AdamW(Config cfg = Config()) : cfg_(cfg) {}

    void step(std::vector<Param*>& params) {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (Param* p : params) {
            if (!p->trainable) continue;
            auto& st = state_[p];
            if (st.m.shape != p->value.shape) {
                st.m = Tensor::zeros(p->value.shape);
                st.v = Tensor::zeros(p->value.shape);
            }
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                double g = p->grad[i];
                st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
                st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = st.m[i] / bc1;
                double vhat = st.v[i] / bc2;
                p->value[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p->value[i]);
            }
        }
    }

    struct State {
        Tensor m, v;
    };

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    std::unordered_map<Param*, State>& state() { return state_; }
    const Config& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

   private:
    Config cfg_;
    int64_t t_ = 0;
    std::unordered_map<Param*, State> state_;
};

}  // namespace tide
