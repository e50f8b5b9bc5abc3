#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tide/autodiff.hpp"
#include "tide/params.hpp"
#include "tide/rng.hpp"
#include "tide/tensor.hpp"

namespace tide::nn {

using ad::Var;

// ---- tokenizer / text encoder ----

struct Vocab {
    std::vector<std::string> words;  // index = id; ids 0..2 are sentinels
    static constexpr int64_t kBos = 0, kEos = 1, kUnk = 2;

    int64_t size() const { return static_cast<int64_t>(words.size()); }

    int64_t id_of(const std::string& w) const {
        for (size_t i = 0; i < words.size(); ++i)
            if (words[i] == w) return static_cast<int64_t>(i);
        return kUnk;
    }
};

// Toy vocabulary spanning the scene grammar plus spare descriptive words
// for zero-shot caption composition.
inline Vocab default_vocab() {
    Vocab v;
    v.words = {"<bos>", "<eos>", "<unk>",
               "a", "an", "the", "and", "over", "under", "near", "by", "with",
               "seabed", "fish", "reef", "plant", "wreck", "diver", "robot",
               "plain", "sandy", "dark", "bright", "murky",
               "two", "three", "small", "large", "swimming", "resting",
               "blue", "green", "red", "rocky", "coral", "deep", "shallow",
               "calm", "open", "water"};
    return v;
}

// lowercased whitespace tokenization wrapped in BOS/EOS; unknown -> UNK
inline std::vector<int64_t> tokenize(const std::string& caption, const Vocab& vocab) {
    std::vector<int64_t> ids = {Vocab::kBos};
    std::stringstream ss(caption);
    std::string w;
    while (ss >> w) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
        ids.push_back(vocab.id_of(w));
    }
    ids.push_back(Vocab::kEos);
    return ids;
}

struct TextEncoder {
    Param embed;      // V x c
    Param positions;  // Lmax x c
    Vocab vocab;

    TextEncoder() = default;
    TextEncoder(const Vocab& v, int64_t c, int64_t max_len, Rng& rng, const std::string& prefix)
        : embed(prefix + ".embed", rng.normal_tensor({v.size(), c}, 0.02)),
          positions(prefix + ".positions", rng.normal_tensor({max_len, c}, 0.02)),
          vocab(v) {}

    // row l = embed[token_l] + positions[l]
    Var encode(Graph& g, const std::vector<int64_t>& tokens) {
        if (tokens.empty()) throw std::invalid_argument("encode_text: empty token sequence");
        if (static_cast<int64_t>(tokens.size()) > positions.value.rows())
            throw std::invalid_argument("encode_text: sequence longer than position table");
        std::vector<int64_t> pos_ids(tokens.size());
        for (size_t i = 0; i < tokens.size(); ++i) pos_ids[i] = static_cast<int64_t>(i);
        return ad::add(ad::gather_rows(g.leaf(embed), tokens), ad::gather_rows(g.leaf(positions), pos_ids));
    }
};

// standard sinusoidal features; width must be even
inline Tensor time_embedding(int t, int64_t width) {
    if (t < 0) throw std::invalid_argument("time_embedding: t must be >= 0");
    if (width % 2 != 0) throw std::invalid_argument("time_embedding: width must be even");
    Tensor out({width});
    int64_t half = width / 2;
    for (int64_t i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(t * freq);
        out[half + i] = std::cos(t * freq);
    }
    return out;
}

// ---- linear layers with optional low-rank adapters ----

struct LoraAdapter {
    int64_t rank = 0;
    double scale = 1.0;
    Param A;  // rank x in
    Param B;  // out x rank, zero-initialized: the adapter is exactly zero at init

    LoraAdapter() = default;
    LoraAdapter(int64_t r, int64_t in, int64_t out, double s, Rng& rng, const std::string& prefix)
        : rank(r), scale(s),
          A(prefix + ".lora_a", rng.normal_tensor({r, in}, 1.0 / std::sqrt(static_cast<double>(in)))),
          B(prefix + ".lora_b", Tensor::zeros({out, r})) {}
};

// y = x W^T + b (+ scale * x A^T B^T when an adapter is attached)
struct Linear {
    Param W;  // out x in
    Param b;  // out
    std::optional<LoraAdapter> lora;

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng, const std::string& prefix, bool zero_init = false)
        : W(prefix + ".w", zero_init ? Tensor::zeros({out, in}) : rng.normal_tensor({out, in}, 1.0 / std::sqrt(static_cast<double>(in)))),
          b(prefix + ".b", Tensor::zeros({out})) {}

    void attach_lora(int64_t rank, double scale, Rng& rng) {
        if (rank < 0 || rank > W.value.cols()) throw std::invalid_argument("lora: rank out of range for " + W.name);
        if (rank > 0) lora.emplace(rank, W.value.cols(), W.value.rows(), scale, rng, W.name.substr(0, W.name.size() - 2));
    }

    Var apply(Graph& g, const Var& x) const {
        Var out = ad::add_rowvec(ad::matmul_nt(x, g.leaf(const_cast<Param&>(W))), g.leaf(const_cast<Param&>(b)));
        if (lora && lora->rank > 0) {
            auto& l = const_cast<LoraAdapter&>(*lora);
            Var delta = ad::matmul_nt(ad::matmul_nt(x, g.leaf(l.A)), g.leaf(l.B));
            out = ad::add(out, ad::scale(delta, l.scale));
        }
        return out;
    }
};

inline Var lora_linear(Graph& g, const Var& x, const Linear& lin) { return lin.apply(g, x); }

// ---- attention ----

struct AttentionParams {
    Linear q, k, v, o;
    int64_t width = 0;

    AttentionParams() = default;
    AttentionParams(int64_t c, Rng& rng, const std::string& prefix)
        : q(c, c, rng, prefix + ".q"), k(c, c, rng, prefix + ".k"), v(c, c, rng, prefix + ".v"), o(c, c, rng, prefix + ".o"), width(c) {}

    void attach_lora(int64_t rank, double scale, Rng& rng) {
        q.attach_lora(rank, scale, rng);
        k.attach_lora(rank, scale, rng);
        v.attach_lora(rank, scale, rng);
        o.attach_lora(rank, scale, rng);
    }
};

struct CrossAttentionOut {
    Var out;     // N x c
    Var layout;  // N x L row-stochastic attention map
};

// softmax(Q K^T / sqrt(c)) V with Q from x and K,V from ctx; the layout is
// returned so it can be shared with other branches.
inline CrossAttentionOut cross_attention(Graph& g, const Var& x, const Var& ctx, const AttentionParams& p) {
    if (x->value.cols() != p.width || ctx->value.cols() != p.width)
        throw std::invalid_argument("cross_attention: width mismatch");
    Var q = p.q.apply(g, x);
    Var k = p.k.apply(g, ctx);
    Var v = p.v.apply(g, ctx);
    Var logits = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(p.width)));
    Var layout = ad::softmax_rows(logits);
    Var out = p.o.apply(g, ad::matmul(layout, v));
    return {out, layout};
}

// Consume a shared layout: out = layout x V(ctx), output-projected. The
// consumer's own Q and K projections are never evaluated.
inline Var apply_shared_attention(Graph& g, const Var& layout, const Var& ctx, const AttentionParams& p) {
    if (layout->value.cols() != ctx->value.rows())
        throw std::invalid_argument("apply_shared_attention: layout/context length mismatch");
    Var v = p.v.apply(g, ctx);
    return p.o.apply(g, ad::matmul(layout, v));
}

inline Var self_attention(Graph& g, const Var& x, const AttentionParams& p) {
    return cross_attention(g, x, x, p).out;
}

// ---- time adaptive normalization ----

// Produces (gamma, beta) from cross-modal features through two-layer
// perceptrons whose final layers are zero-initialized, and a sigmoid gate
// alpha from the time embedding. Fresh layers are exact pass-throughs.
struct TanLayer {
    Linear g1, g2;     // x_f -> gamma, g2 zero-init
    Linear b1, b2;     // x_f -> beta, b2 zero-init
    Linear time_gate;  // x_t -> scalar pre-gate

    TanLayer() = default;
    TanLayer(int64_t c, int64_t t_width, Rng& rng, const std::string& prefix)
        : g1(c, c, rng, prefix + ".g1"), g2(c, c, rng, prefix + ".g2", /*zero_init=*/true),
          b1(c, c, rng, prefix + ".b1"), b2(c, c, rng, prefix + ".b2", /*zero_init=*/true),
          time_gate(t_width, 1, rng, prefix + ".gate") {}

    Var gamma(Graph& g, const Var& x_f) const { return g2.apply(g, ad::silu(g1.apply(g, x_f))); }
    Var beta(Graph& g, const Var& x_f) const { return b2.apply(g, ad::silu(b1.apply(g, x_f))); }
    Var alpha(Graph& g, const Var& x_t) const {
        return ad::sigmoid(time_gate.apply(g, ad::reshape(x_t, {1, x_t->value.numel()})));
    }
};

// x' = alpha * gamma . x + alpha * beta;  x* = x' + x
inline Var tan_modulate(Graph& g, const Var& x, const Var& x_f, const Var& x_t, const TanLayer& layer) {
    check_same_shape(x->value, x_f->value, "tan_modulate");
    Var gm = layer.gamma(g, x_f);
    Var bt = layer.beta(g, x_f);
    Var a = layer.alpha(g, x_t);
    Var xp = ad::scale_by(ad::add(ad::mul(gm, x), bt), a);
    return ad::add(xp, x);
}

// image-branch variant: gamma/beta computed from both annotation branches
// and averaged before the same modulation
inline Var tan_modulate_dual(Graph& g, const Var& x, const Var& x_f_depth, const Var& x_f_mask, const Var& x_t, const TanLayer& layer) {
    check_same_shape(x->value, x_f_depth->value, "tan_modulate_dual");
    check_same_shape(x->value, x_f_mask->value, "tan_modulate_dual");
    Var gm = ad::scale(ad::add(layer.gamma(g, x_f_depth), layer.gamma(g, x_f_mask)), 0.5);
    Var bt = ad::scale(ad::add(layer.beta(g, x_f_depth), layer.beta(g, x_f_mask)), 0.5);
    Var a = layer.alpha(g, x_t);
    Var xp = ad::scale_by(ad::add(ad::mul(gm, x), bt), a);
    return ad::add(xp, x);
}

// ---- finite-difference gradient checking ----

struct GradCheckReport {
    std::string unit;
    double max_rel_err = 0.0;
    double tol = 0.0;
    int64_t checked = 0;
    bool pass = false;
    std::string worst_param;
};

// Compares analytic gradients of a scalar loss against central finite
// differences. For large tensors a deterministic subset of components is
// probed (every tensor still contributes). build_loss must construct the
// scalar loss inside the graph it is handed.
inline GradCheckReport grad_check(const std::string& unit, std::vector<Param*> params,
                                  const std::function<Var(Graph&)>& build_loss, double tol,
                                  int64_t max_components_per_param = 24, double h = 1e-5) {
    GradCheckReport rep;
    rep.unit = unit;
    rep.tol = tol;
    if (params.empty()) throw std::invalid_argument("grad_check: no trainable parameters");

    auto eval = [&](void) -> double {
        Graph g;
        Var l = build_loss(g);
        double v = l->value[0];
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
        return v;
    };

    // analytic pass
    for (Param* p : params) p->zero_grad();
    {
        Graph g;
        Var l = build_loss(g);
        if (!std::isfinite(l->value[0])) throw std::runtime_error("grad_check: non-finite loss");
        g.backward(l);
    }
    uint64_t salt = 0x9e3779b9u;
    for (Param* p : params) {
        int64_t n = p->value.numel();
        int64_t step = std::max<int64_t>(1, n / max_components_per_param);
        uint64_t offset = mix_keys(salt, std::hash<std::string>{}(p->name)) % static_cast<uint64_t>(step);
        for (int64_t i = static_cast<int64_t>(offset); i < n; i += step) {
            double orig = p->value[i];
            p->value[i] = orig + h;
            double lp = eval();
            p->value[i] = orig - h;
            double lm = eval();
            p->value[i] = orig;
            double numeric = (lp - lm) / (2.0 * h);
            double analytic = p->grad[i];
            if (!std::isfinite(numeric) || !std::isfinite(analytic)) throw std::runtime_error("grad_check: non-finite gradient");
            double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic) + std::abs(numeric));
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p->name;
            }
            ++rep.checked;
        }
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace tide::nn
