#pragma once

#include <map>
#include <string>
#include <vector>

#include "tide/codec.hpp"
#include "tide/nn.hpp"
#include "tide/params.hpp"
#include "tide/rng.hpp"

namespace tide::model {

using ad::Var;
using nn::AttentionParams;
using nn::Linear;
using nn::TanLayer;
using nn::TextEncoder;

struct ModelConfig {
    int height = 16, width = 16, channels = 3;
    int patch = 2;  // 8x8 token grid; patch 4 blurs object boundaries below metric resolution
    int64_t c = 64;
    int image_layers = 8;
    int mini_layers = 4;
    int ff_mult = 4;
    int share_start = 0, share_end = 7, share_stride = 2;
    int64_t lora_rank_image = 4, lora_rank_depth = 8, lora_rank_mask = 8;
    double lora_scale = 1.0;
    int64_t max_text_len = 24;

    int64_t tokens() const { return static_cast<int64_t>(height / patch) * (width / patch); }
    int64_t patch_dim() const { return static_cast<int64_t>(patch) * patch * channels; }
};

// (image layer -> annotation layer) pairs: (start + j*stride -> j) while
// both indices stay in range.
using ShareMap = std::vector<std::pair<int, int>>;

inline ShareMap build_share_map(int image_layers, int mini_layers, int start, int end, int stride) {
    if (stride < 1) throw std::invalid_argument("build_share_map: stride must be >= 1");
    if (start > end || end >= image_layers) throw std::invalid_argument("build_share_map: need start <= end < image_layers");
    ShareMap map;
    for (int j = 0; j < mini_layers; ++j) {
        int li = start + j * stride;
        if (li > end || li >= image_layers) break;
        map.emplace_back(li, j);
    }
    if (map.empty()) throw std::invalid_argument("build_share_map: empty map");
    return map;
}

// slice columns [start, start+len) of a 1 x m row as a length-len vector
inline Var slice_row(const Var& v, int64_t start, int64_t len) {
    std::vector<int64_t> idx(len);
    for (int64_t i = 0; i < len; ++i) idx[i] = start + i;
    return ad::permute(v, idx, {len});
}

// LN(x) * (1 + s) + b with s, b length-c vectors from the time MLP
inline Var modulate(const Var& x, const Var& s, const Var& b) {
    return ad::add_rowvec(ad::mul_rowvec(x, ad::add_const(s, 1.0)), b);
}

// One transformer block: self-attention, cross-attention (the layout
// site), feedforward; each residual, each premodulated by time-conditioned
// scale/shift (zero-initialized so fresh modulation is the identity).
struct BlockParams {
    AttentionParams self_attn;
    AttentionParams cross_attn;
    Linear ff1, ff2;
    Linear ada;  // c -> 6c, zero-init

    BlockParams() = default;
    BlockParams(const ModelConfig& cfg, Rng& rng, const std::string& prefix)
        : self_attn(cfg.c, rng, prefix + ".self"),
          cross_attn(cfg.c, rng, prefix + ".cross"),
          ff1(cfg.c, cfg.c * cfg.ff_mult, rng, prefix + ".ff1"),
          ff2(cfg.c * cfg.ff_mult, cfg.c, rng, prefix + ".ff2"),
          ada(cfg.c, 6 * cfg.c, rng, prefix + ".ada", /*zero_init=*/true) {}

    void collect(std::vector<Param*>& out);
};

struct BlockOut {
    Var x;
    Var layout;  // null when a shared layout was consumed
};

// kind tags for BranchSpec / parameter naming
enum class Modality { image, depth, mask };

struct Branch {
    std::string prefix;
    Linear patch_embed;  // patch_dim -> c
    Param pos;           // N x c
    Linear time1, time2;  // sinusoidal t -> c features for modulation
    std::vector<BlockParams> blocks;
    Linear head;  // c -> patch_dim (linear unpatchify)
    ModelConfig cfg;

    Branch() = default;
    Branch(const ModelConfig& cfg_, int layers, Rng& rng, const std::string& prefix_)
        : prefix(prefix_),
          patch_embed(cfg_.patch_dim(), cfg_.c, rng, prefix_ + ".patch_embed"),
          pos(prefix_ + ".pos", rng.normal_tensor({cfg_.tokens(), cfg_.c}, 0.02)),
          time1(cfg_.c, cfg_.c, rng, prefix_ + ".time1"),
          time2(cfg_.c, cfg_.c, rng, prefix_ + ".time2"),
          head(cfg_.c, cfg_.patch_dim(), rng, prefix_ + ".head"),
          cfg(cfg_) {
        blocks.reserve(layers);
        for (int i = 0; i < layers; ++i) blocks.emplace_back(cfg_, rng, prefix_ + ".blocks." + std::to_string(i));
    }

    int layer_count() const { return static_cast<int>(blocks.size()); }

    Var embed_tokens(Graph& g, const Tensor& z) const {
        if (z.shape != std::vector<int64_t>{cfg.height, cfg.width, cfg.channels})
            throw std::invalid_argument("branch " + prefix + ": latent shape mismatch, got " + shape_str(z));
        auto perm = codec::patch_perm(cfg.height, cfg.width, cfg.channels, cfg.patch);
        Var flat = ad::permute(ad::constant(z), perm, {cfg.tokens(), cfg.patch_dim()});
        return ad::add(patch_embed.apply(g, flat), g.leaf(const_cast<Param&>(pos)));
    }

    Var time_features(Graph& g, int t) const {
        Var emb = ad::constant(nn::time_embedding(t, cfg.c).reshaped({1, cfg.c}));
        return time2.apply(g, ad::silu(time1.apply(g, emb)));
    }

    // run one block; when `shared_layout` is non-null the cross-attention
    // consumes it instead of computing its own map
    BlockOut run_block(Graph& g, int layer, const Var& x_in, const Var& tfeat, const Var& ctx, const Var& shared_layout) const {
        const auto& blk = blocks[layer];
        Var mod = blk.ada.apply(g, tfeat);
        int64_t c = cfg.c;
        Var s1 = slice_row(mod, 0, c), b1 = slice_row(mod, c, c);
        Var s2 = slice_row(mod, 2 * c, c), b2 = slice_row(mod, 3 * c, c);
        Var s3 = slice_row(mod, 4 * c, c), b3 = slice_row(mod, 5 * c, c);

        Var x = x_in;
        x = ad::add(x, nn::self_attention(g, modulate(ad::layernorm_rows(x), s1, b1), blk.self_attn));
        Var layout;
        if (shared_layout) {
            x = ad::add(x, nn::apply_shared_attention(g, shared_layout, ctx, blk.cross_attn));
        } else {
            auto ca = nn::cross_attention(g, modulate(ad::layernorm_rows(x), s2, b2), ctx, blk.cross_attn);
            layout = ca.layout;
            x = ad::add(x, ca.out);
        }
        Var h = modulate(ad::layernorm_rows(x), s3, b3);
        x = ad::add(x, blk.ff2.apply(g, ad::gelu(blk.ff1.apply(g, h))));
        return {x, layout};
    }

    Var apply_head(Graph& g, const Var& x) const {
        Var tok = head.apply(g, ad::layernorm_rows(x));
        auto perm = codec::patch_perm(cfg.height, cfg.width, cfg.channels, cfg.patch);
        // invert: out[perm[i]] = tok[i]
        std::vector<int64_t> inv(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int64_t>(i);
        return ad::permute(tok, inv, {cfg.height, cfg.width, cfg.channels});
    }

    // standalone single-branch denoiser (stage-A path)
    Var forward(Graph& g, const Tensor& z, int t, const Var& ctx) const {
        Var x = embed_tokens(g, z);
        Var tfeat = time_features(g, t);
        for (int i = 0; i < layer_count(); ++i) x = run_block(g, i, x, tfeat, ctx, nullptr).x;
        return apply_head(g, x);
    }

    void attach_lora(int64_t rank, double scale, Rng& rng) {
        for (auto& blk : blocks) {
            blk.self_attn.attach_lora(rank, scale, rng);
            blk.cross_attn.attach_lora(rank, scale, rng);
        }
    }

    void collect(std::vector<Param*>& out);
};

inline void collect_linear(Linear& l, std::vector<Param*>& out) {
    out.push_back(&l.W);
    out.push_back(&l.b);
    if (l.lora) {
        out.push_back(&l.lora->A);
        out.push_back(&l.lora->B);
    }
}

inline void collect_attention(AttentionParams& a, std::vector<Param*>& out) {
    collect_linear(a.q, out);
    collect_linear(a.k, out);
    collect_linear(a.v, out);
    collect_linear(a.o, out);
}

inline void BlockParams::collect(std::vector<Param*>& out) {
    collect_attention(self_attn, out);
    collect_attention(cross_attn, out);
    collect_linear(ff1, out);
    collect_linear(ff2, out);
    collect_linear(ada, out);
}

inline void Branch::collect(std::vector<Param*>& out) {
    collect_linear(patch_embed, out);
    out.push_back(&pos);
    collect_linear(time1, out);
    collect_linear(time2, out);
    for (auto& blk : blocks) blk.collect(out);
    collect_linear(head, out);
}

inline void collect_tan(TanLayer& t, std::vector<Param*>& out) {
    collect_linear(t.g1, out);
    collect_linear(t.g2, out);
    collect_linear(t.b1, out);
    collect_linear(t.b2, out);
    collect_linear(t.time_gate, out);
}

// deep copy of image layers 0..k-1 plus embeddings/head, renamed under
// `new_prefix`; the copy starts life as a truncated image branch
inline Branch init_mini_from_image(const Branch& image, int k, const std::string& new_prefix) {
    if (k < 1 || k > image.layer_count()) throw std::out_of_range("init_mini_from_image: k out of range");
    Rng dummy(0);
    Branch mini(image.cfg, k, dummy, new_prefix);
    std::vector<Param*> src, dst;
    const_cast<Branch&>(image).collect(src);
    mini.collect(dst);
    // the source has more blocks; match by name suffix (strip prefixes)
    auto suffix = [](const Param* p, const std::string& prefix) { return p->name.substr(prefix.size()); };
    std::map<std::string, Param*> by_suffix;
    for (Param* p : src) by_suffix[suffix(p, image.prefix)] = p;
    for (Param* p : dst) {
        auto it = by_suffix.find(suffix(p, new_prefix));
        if (it == by_suffix.end()) throw std::logic_error("init_mini_from_image: missing source tensor for " + p->name);
        p->value = it->second->value;
    }
    return mini;
}

struct Toggles {
    bool ils = true;
    bool tan = true;
};

// captured per share-map site when a trace sink is supplied
struct LayoutTrace {
    std::vector<Tensor> produced;        // image-branch M_i per site
    std::vector<Tensor> consumed_depth;  // map consumed (or computed) by depth branch
    std::vector<Tensor> consumed_mask;
};

struct JointOut {
    Var eps_image, eps_depth, eps_mask;
};

// The full tri-branch denoiser: one full-depth image branch, two shallower
// annotation branches, coupled through layout sharing and TAN exchange at
// the share-map sites.
struct TideModel {
    ModelConfig cfg;
    TextEncoder text;
    Branch image, depth, mask;
    ShareMap share_map;
    struct TanSite {
        TanLayer image_tan, depth_tan, mask_tan;
    };
    std::vector<TanSite> tan_sites;

    TideModel() = default;

    static TideModel build(const ModelConfig& cfg, uint64_t seed) {
        Rng rng(mix_keys(seed, 0x71de3a0de1ULL));
        return build_with_rng(cfg, rng);
    }

    static TideModel build_with_rng(const ModelConfig& cfg, Rng& rng) {
        TideModel m;
        m.cfg = cfg;
        m.text = TextEncoder(nn::default_vocab(), cfg.c, cfg.max_text_len, rng, "text");
        m.image = Branch(cfg, cfg.image_layers, rng, "image");
        m.depth = Branch(cfg, cfg.mini_layers, rng, "depth");
        m.mask = Branch(cfg, cfg.mini_layers, rng, "mask");
        m.share_map = build_share_map(cfg.image_layers, cfg.mini_layers, cfg.share_start, cfg.share_end, cfg.share_stride);
        m.rebuild_tan_sites(rng);
        return m;
    }

    void rebuild_tan_sites(Rng& rng) {
        tan_sites.clear();
        for (size_t i = 0; i < share_map.size(); ++i) {
            TanSite site;
            std::string p = "tan.site" + std::to_string(i);
            site.image_tan = TanLayer(cfg.c, cfg.c, rng, p + ".image");
            site.depth_tan = TanLayer(cfg.c, cfg.c, rng, p + ".depth");
            site.mask_tan = TanLayer(cfg.c, cfg.c, rng, p + ".mask");
            tan_sites.push_back(std::move(site));
        }
    }

    void attach_all_lora(Rng& rng) {
        image.attach_lora(cfg.lora_rank_image, cfg.lora_scale, rng);
        depth.attach_lora(cfg.lora_rank_depth, cfg.lora_scale, rng);
        mask.attach_lora(cfg.lora_rank_mask, cfg.lora_scale, rng);
    }

    std::vector<Param*> all_parameters() {
        std::vector<Param*> out;
        out.push_back(&text.embed);
        out.push_back(&text.positions);
        image.collect(out);
        depth.collect(out);
        mask.collect(out);
        for (auto& s : tan_sites) {
            collect_tan(s.image_tan, out);
            collect_tan(s.depth_tan, out);
            collect_tan(s.mask_tan, out);
        }
        return out;
    }

    // exactly the LoRA and TAN tensors
    std::vector<Param*> trainable_parameters() {
        std::vector<Param*> out;
        for (Param* p : all_parameters())
            if (p->name.find(".lora_") != std::string::npos || p->name.rfind("tan.", 0) == 0) out.push_back(p);
        return out;
    }

    // stage-B freeze: mark exactly trainable_parameters() trainable
    void apply_stage_b_freeze() {
        for (Param* p : all_parameters()) p->trainable = false;
        for (Param* p : trainable_parameters()) p->trainable = true;
    }

    JointOut forward_joint(Graph& g, const Tensor& z_i, const Tensor& z_d, const Tensor& z_m, int t,
                           const std::vector<int64_t>& tokens, Toggles toggles, LayoutTrace* trace = nullptr) {
        Var ctx = text.encode(g, tokens);
        Var xi = image.embed_tokens(g, z_i);
        Var xd = depth.embed_tokens(g, z_d);
        Var xm = mask.embed_tokens(g, z_m);
        Var ti = image.time_features(g, t);
        Var td = depth.time_features(g, t);
        Var tm = mask.time_features(g, t);
        Var t_emb = ad::constant(nn::time_embedding(t, cfg.c));

        size_t site = 0;
        int ann_done = 0;
        for (int li = 0; li < image.layer_count(); ++li) {
            auto img_out = image.run_block(g, li, xi, ti, ctx, nullptr);
            xi = img_out.x;
            if (site < share_map.size() && share_map[site].first == li) {
                int j = share_map[site].second;
                Var shared = toggles.ils ? img_out.layout : nullptr;
                auto d_out = depth.run_block(g, j, xd, td, ctx, shared);
                auto m_out = mask.run_block(g, j, xm, tm, ctx, shared);
                xd = d_out.x;
                xm = m_out.x;
                if (trace) {
                    trace->produced.push_back(img_out.layout->value);
                    trace->consumed_depth.push_back(toggles.ils ? img_out.layout->value : d_out.layout->value);
                    trace->consumed_mask.push_back(toggles.ils ? img_out.layout->value : m_out.layout->value);
                }
                if (toggles.tan) {
                    const auto& ts = tan_sites[site];
                    Var xi0 = xi, xd0 = xd, xm0 = xm;  // snapshots: exchanges are simultaneous
                    xd = nn::tan_modulate(g, xd0, xm0, t_emb, ts.depth_tan);
                    xm = nn::tan_modulate(g, xm0, xd0, t_emb, ts.mask_tan);
                    xi = nn::tan_modulate_dual(g, xi0, xd0, xm0, t_emb, ts.image_tan);
                }
                ++site;
                ++ann_done;
            }
        }
        // annotation layers beyond the share map run uncoupled
        for (int j = ann_done; j < depth.layer_count(); ++j) xd = depth.run_block(g, j, xd, td, ctx, nullptr).x;
        for (int j = ann_done; j < mask.layer_count(); ++j) xm = mask.run_block(g, j, xm, tm, ctx, nullptr).x;

        JointOut out;
        out.eps_image = image.apply_head(g, xi);
        out.eps_depth = depth.apply_head(g, xd);
        out.eps_mask = mask.apply_head(g, xm);
        return out;
    }
};

}  // namespace tide::model
