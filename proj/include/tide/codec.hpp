#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tide/tensor.hpp"

namespace tide::codec {

// Fixed color code for categorical masks: K well-separated colors in
// [-1,1]^3 so masks can diffuse as continuous images and be decoded by
// nearest-color lookup.
struct Palette {
    std::vector<std::array<double, 3>> colors;
    std::vector<std::string> names;

    int K() const { return static_cast<int>(colors.size()); }

    void validate() const {
        if (colors.empty() || colors.size() != names.size()) throw std::invalid_argument("palette: empty or name/color count mismatch");
        for (size_t a = 0; a < colors.size(); ++a)
            for (size_t b = a + 1; b < colors.size(); ++b) {
                double d2 = 0.0;
                for (int k = 0; k < 3; ++k) {
                    double d = colors[a][k] - colors[b][k];
                    d2 += d * d;
                }
                if (std::sqrt(d2) < 0.5) throw std::invalid_argument("palette: colors closer than decodability margin 0.5");
            }
    }
};

// Seven corners of the [-1,1]^3 cube in fixed order; index 0 is the
// background category.
inline Palette default_palette() {
    Palette p;
    p.colors = {
        {-1, -1, 1},   // seabed (blue)
        {-1, -1, -1},  // fish (black)
        {1, -1, -1},   // reef (red)
        {-1, 1, -1},   // plant (green)
        {1, -1, 1},    // wreck (magenta)
        {1, 1, 1},     // diver (white)
        {-1, 1, 1},    // robot (cyan)
    };
    p.names = {"seabed", "fish", "reef", "plant", "wreck", "diver", "robot"};
    p.validate();
    return p;
}

// mask: H x W int-valued category grid stored as Tensor ({H,W}); returns {H,W,3}
inline Tensor encode_mask(const Tensor& mask, const Palette& p) {
    if (mask.rank() != 2) throw std::invalid_argument("encode_mask: expected H x W grid");
    int64_t H = mask.shape[0], W = mask.shape[1];
    Tensor out({H, W, 3});
    for (int64_t i = 0; i < H * W; ++i) {
        int id = static_cast<int>(mask[i]);
        if (id < 0 || id >= p.K()) throw std::out_of_range("encode_mask: category id out of range");
        for (int k = 0; k < 3; ++k) out[i * 3 + k] = p.colors[id][k];
    }
    return out;
}

// nearest palette color; ties break toward the lowest category id
inline Tensor decode_mask(const Tensor& grid, const Palette& p) {
    if (grid.rank() != 3 || grid.shape[2] != 3) throw std::invalid_argument("decode_mask: expected H x W x 3 grid");
    if (!grid.all_finite()) throw std::invalid_argument("decode_mask: non-finite input");
    int64_t H = grid.shape[0], W = grid.shape[1];
    Tensor out({H, W});
    for (int64_t i = 0; i < H * W; ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int id = 0; id < p.K(); ++id) {
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) {
                double d = grid[i * 3 + k] - p.colors[id][k];
                d2 += d * d;
            }
            if (d2 < best_d) {  // strict: first (lowest id) wins ties
                best_d = d2;
                best = id;
            }
        }
        out[i] = static_cast<double>(best);
    }
    return out;
}

inline Tensor encode_depth(const Tensor& depth) {
    Tensor out(depth.shape);
    for (int64_t i = 0; i < depth.numel(); ++i) {
        double d = depth[i];
        if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("encode_depth: value outside [0,1]");
        out[i] = 2.0 * d - 1.0;
    }
    return out;
}

inline Tensor decode_depth(const Tensor& grid) {
    Tensor out(grid.shape);
    for (int64_t i = 0; i < grid.numel(); ++i) {
        if (!std::isfinite(grid[i])) throw std::invalid_argument("decode_depth: non-finite input");
        out[i] = std::clamp(0.5 * (grid[i] + 1.0), 0.0, 1.0);
    }
    return out;
}

// Flattened index map for non-overlapping patch extraction: entry n*D+d of
// the token grid reads pixel perm[n*D+d] of the H x W x C image.
inline std::vector<int64_t> patch_perm(int64_t H, int64_t W, int64_t C, int64_t patch) {
    if (patch < 1 || H % patch != 0 || W % patch != 0) throw std::invalid_argument("patchify: patch must divide H and W");
    int64_t gh = H / patch, gw = W / patch, D = patch * patch * C;
    std::vector<int64_t> perm(gh * gw * D);
    int64_t n = 0;
    for (int64_t py = 0; py < gh; ++py)
        for (int64_t px = 0; px < gw; ++px) {
            int64_t d = 0;
            for (int64_t dy = 0; dy < patch; ++dy)
                for (int64_t dx = 0; dx < patch; ++dx)
                    for (int64_t c = 0; c < C; ++c)
                        perm[n * D + d++] = ((py * patch + dy) * W + (px * patch + dx)) * C + c;
            ++n;
        }
    return perm;
}

// Plain-tensor patchify: H x W x C -> N x (patch^2 * C). The in-model path
// applies the same permutation inside the autodiff graph.
inline Tensor patchify(const Tensor& image, int64_t patch) {
    if (image.rank() != 3) throw std::invalid_argument("patchify: expected H x W x C image");
    int64_t H = image.shape[0], W = image.shape[1], C = image.shape[2];
    auto perm = patch_perm(H, W, C, patch);
    int64_t D = patch * patch * C;
    Tensor out({static_cast<int64_t>(perm.size()) / D, D});
    for (size_t i = 0; i < perm.size(); ++i) out[i] = image[perm[i]];
    return out;
}

inline Tensor unpatchify(const Tensor& tokens, int64_t H, int64_t W, int64_t C, int64_t patch) {
    auto perm = patch_perm(H, W, C, patch);
    if (static_cast<int64_t>(perm.size()) != tokens.numel()) throw std::invalid_argument("unpatchify: size mismatch");
    Tensor out({H, W, C});
    for (size_t i = 0; i < perm.size(); ++i) out[perm[i]] = tokens[i];
    return out;
}

}  // namespace tide::codec
