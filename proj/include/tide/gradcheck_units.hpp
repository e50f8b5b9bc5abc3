#pragma once

// Named differentiable probe units for finite-difference gradient checking,
// shared between the CLI and the test suites.

#include <functional>
#include <string>
#include <vector>

#include "tide/train.hpp"

namespace tide::gradcheck {

using ad::Var;

inline nn::GradCheckReport run_unit(const std::string& name, double tol) {
    Rng rng(mix_keys(0x6ce7u, std::hash<std::string>{}(name)));

    if (name == "tan" || name == "tan_dual") {
        nn::TanLayer layer(3, 4, rng, "tan");
        layer.g2.W.value = rng.normal_tensor({3, 3}, 0.3);  // off the zero-init point
        layer.b2.W.value = rng.normal_tensor({3, 3}, 0.3);
        Tensor x = rng.normal_tensor({4, 3});
        Tensor x_f = rng.normal_tensor({4, 3});
        Tensor x_f2 = rng.normal_tensor({4, 3});
        Tensor x_t = nn::time_embedding(7, 4);
        std::vector<Param*> params = {&layer.g1.W, &layer.g1.b, &layer.g2.W, &layer.g2.b, &layer.b1.W,
                                      &layer.b1.b, &layer.b2.W, &layer.b2.b, &layer.time_gate.W, &layer.time_gate.b};
        bool dual = name == "tan_dual";
        return nn::grad_check(name, params, [&, dual](Graph& g) {
            Var out = dual ? nn::tan_modulate_dual(g, g.input(x), g.input(x_f), g.input(x_f2), g.input(x_t), layer)
                           : nn::tan_modulate(g, g.input(x), g.input(x_f), g.input(x_t), layer);
            return ad::mse(out, g.input(Tensor::zeros({4, 3})));
        }, tol);
    }

    if (name == "lora_linear") {
        nn::Linear lin(3, 3, rng, "lin");
        lin.attach_lora(2, 1.0, rng);
        lin.lora->B.value = rng.normal_tensor({3, 2}, 0.4);
        Tensor x = rng.normal_tensor({4, 3});
        return nn::grad_check(name, {&lin.lora->A, &lin.lora->B, &lin.W, &lin.b}, [&](Graph& g) {
            return ad::mse(nn::lora_linear(g, g.input(x), lin), g.input(Tensor::zeros({4, 3})));
        }, tol);
    }

    if (name == "cross_attention") {
        nn::AttentionParams p(3, rng, "attn");
        Tensor x = rng.normal_tensor({4, 3});
        Tensor ctx = rng.normal_tensor({3, 3});
        std::vector<Param*> params = {&p.q.W, &p.q.b, &p.k.W, &p.k.b, &p.v.W, &p.v.b, &p.o.W, &p.o.b};
        return nn::grad_check(name, params, [&](Graph& g) {
            return ad::mse(nn::cross_attention(g, g.input(x), g.input(ctx), p).out, g.input(Tensor::zeros({4, 3})));
        }, tol);
    }

    if (name == "shared_attention") {
        nn::AttentionParams prod(3, rng, "prod");
        nn::AttentionParams cons(3, rng, "cons");
        Tensor x = rng.normal_tensor({4, 3});
        Tensor ctx = rng.normal_tensor({3, 3});
        std::vector<Param*> params = {&prod.q.W, &prod.q.b, &prod.k.W, &prod.k.b,
                                      &cons.v.W, &cons.v.b, &cons.o.W, &cons.o.b};
        return nn::grad_check(name, params, [&](Graph& g) {
            auto res = nn::cross_attention(g, g.input(x), g.input(ctx), prod);
            Var out = nn::apply_shared_attention(g, res.layout, g.input(ctx), cons);
            return ad::mse(out, g.input(Tensor::zeros({4, 3})));
        }, tol);
    }

    if (name == "patch_embed") {
        model::ModelConfig cfg;
        cfg.height = cfg.width = 8;
        cfg.patch = 4;
        cfg.c = 6;
        cfg.image_layers = 1;
        cfg.mini_layers = 1;
        cfg.share_end = 0;
        model::Branch branch(cfg, 1, rng, "probe");
        Tensor z = rng.normal_tensor({8, 8, 3});
        return nn::grad_check(name, {&branch.patch_embed.W, &branch.patch_embed.b, &branch.pos}, [&](Graph& g) {
            return ad::mse(branch.embed_tokens(g, z), g.input(Tensor::zeros({cfg.tokens(), cfg.c})));
        }, tol);
    }

    if (name == "joint_2layer") {
        RunConfig cfg;
        cfg.model.height = cfg.model.width = 8;
        cfg.model.patch = 4;
        cfg.model.c = 6;
        cfg.model.image_layers = 2;
        cfg.model.mini_layers = 1;
        cfg.model.ff_mult = 2;
        cfg.model.share_start = 0;
        cfg.model.share_end = 1;
        cfg.model.share_stride = 2;
        cfg.model.lora_rank_image = 1;
        cfg.model.lora_rank_depth = 1;
        cfg.model.lora_rank_mask = 1;
        cfg.seed = 40;
        auto a = train::build_stage_a(cfg);
        auto m = train::build_stage_b(a, cfg);
        // push LoRA/TAN off the zero-init plateau for generic gradients
        for (Param* p : m.trainable_parameters()) p->value = rng.normal_tensor(p->value.shape, 0.1);
        auto tokens = nn::tokenize("a fish over a dark seabed", m.text.vocab);
        Tensor zi = rng.normal_tensor({8, 8, 3}), zd = rng.normal_tensor({8, 8, 3}), zm = rng.normal_tensor({8, 8, 3});
        Tensor ei = rng.normal_tensor({8, 8, 3}), ed = rng.normal_tensor({8, 8, 3}), em = rng.normal_tensor({8, 8, 3});
        auto params = m.trainable_parameters();
        return nn::grad_check(name, params, [&](Graph& g) {
            auto out = m.forward_joint(g, zi, zd, zm, 3, tokens, {true, true});
            Var li = train::denoising_loss(out.eps_image, ei);
            Var ld = train::denoising_loss(out.eps_depth, ed);
            Var lm = train::denoising_loss(out.eps_mask, em);
            return ad::add(ad::add(li, ld), lm);
        }, tol, /*max_components_per_param=*/6);
    }

    throw std::invalid_argument("gradcheck: unknown unit " + name);
}

inline std::vector<std::string> all_units() {
    return {"tan", "tan_dual", "lora_linear", "cross_attention", "shared_attention", "patch_embed", "joint_2layer"};
}

}  // namespace tide::gradcheck
