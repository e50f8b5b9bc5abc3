#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tide/codec.hpp"
#include "tide/scenes.hpp"
#include "tide/tensor.hpp"

namespace tide::eval {

// Nine-field dense-depth metric record.
struct DepthMetrics {
    double si_log = 0, a_rel = 0, log10 = 0, rmse = 0, s_rel = 0, rmse_log = 0;
    double delta1 = 0, delta2 = 0, delta3 = 0;
};

// All statistics over valid pixels; si_log uses the population variance of
// the per-pixel log ratio, which makes it invariant to a global scale on
// the prediction.
inline DepthMetrics depth_metrics(const Tensor& pred_in, const Tensor& gt, const std::vector<bool>& valid, bool median_align = false) {
    check_same_shape(pred_in, gt, "depth_metrics");
    if (valid.size() != static_cast<size_t>(gt.numel())) throw std::invalid_argument("depth_metrics: valid mask size mismatch");
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < gt.numel(); ++i)
        if (valid[i]) idx.push_back(i);
    if (idx.empty()) throw std::invalid_argument("depth_metrics: no valid pixels");
    for (int64_t i : idx)
        if (!(pred_in[i] > 0.0 && gt[i] > 0.0)) throw std::invalid_argument("depth_metrics: nonpositive depth on valid pixel");

    Tensor pred = pred_in;
    if (median_align) {
        auto median_of = [&](const Tensor& t) {
            std::vector<double> v;
            v.reserve(idx.size());
            for (int64_t i : idx) v.push_back(t[i]);
            std::sort(v.begin(), v.end());
            size_t n = v.size();
            return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        };
        double s = median_of(gt) / median_of(pred);
        for (int64_t i : idx) pred[i] *= s;
    }

    DepthMetrics m;
    double n = static_cast<double>(idx.size());
    double log_sum = 0, log_sq_sum = 0;
    for (int64_t i : idx) {
        double d = gt[i] - pred[i];
        m.a_rel += std::abs(d) / gt[i];
        m.s_rel += d * d / gt[i];
        m.rmse += d * d;
        double lg = std::log(gt[i]) - std::log(pred[i]);
        m.rmse_log += lg * lg;
        m.log10 += std::abs(std::log10(gt[i]) - std::log10(pred[i]));
        double eps_log = std::log(pred[i]) - std::log(gt[i]);
        log_sum += eps_log;
        log_sq_sum += eps_log * eps_log;
        double ratio = std::max(gt[i] / pred[i], pred[i] / gt[i]);
        if (ratio < 1.25) m.delta1 += 1;
        if (ratio < 1.25 * 1.25) m.delta2 += 1;
        if (ratio < 1.25 * 1.25 * 1.25) m.delta3 += 1;
    }
    m.a_rel /= n;
    m.s_rel /= n;
    m.rmse = std::sqrt(m.rmse / n);
    m.rmse_log = std::sqrt(m.rmse_log / n);
    m.log10 /= n;
    m.delta1 /= n;
    m.delta2 /= n;
    m.delta3 /= n;
    double mean_log = log_sum / n;
    double var_log = log_sq_sum / n - mean_log * mean_log;  // population variance
    m.si_log = 100.0 * std::sqrt(std::max(0.0, var_log));
    return m;
}

inline std::vector<bool> all_valid(const Tensor& t) { return std::vector<bool>(static_cast<size_t>(t.numel()), true); }

struct IouResult {
    std::vector<double> per_category;  // NaN where excluded (absent from both)
    double mean = 0;
    int included = 0;
};

inline IouResult miou(const Tensor& pred, const Tensor& gt, int K) {
    check_same_shape(pred, gt, "miou");
    std::vector<int64_t> inter(K, 0), uni(K, 0);
    for (int64_t i = 0; i < gt.numel(); ++i) {
        int p = static_cast<int>(pred[i]), g = static_cast<int>(gt[i]);
        if (p < 0 || p >= K || g < 0 || g >= K) throw std::out_of_range("miou: category id out of range");
        if (p == g) ++inter[p];
        if (p == g) {
            ++uni[p];
        } else {
            ++uni[p];
            ++uni[g];
        }
    }
    IouResult r;
    r.per_category.assign(K, std::numeric_limits<double>::quiet_NaN());
    double acc = 0;
    for (int k = 0; k < K; ++k) {
        if (uni[k] == 0) continue;  // absent from both grids
        r.per_category[k] = static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
        acc += r.per_category[k];
        ++r.included;
    }
    if (r.included == 0) throw std::invalid_argument("miou: no category present in either grid");
    r.mean = acc / r.included;
    return r;
}

// Spearman rank correlation with average ranks for ties.
inline std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("spearman: size mismatch or empty");
    auto ranks = [](const std::vector<double>& v) {
        size_t n = v.size();
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return std::nullopt;  // constant input, undefined
    return cov / std::sqrt(va * vb);
}

// Rule-implied depth reconstructed from a category grid: background pixels
// follow the row gradient, object pixels get the radius-rule depth with the
// radius estimated from the category's pixel area.
inline Tensor implied_depth(const Tensor& mask, const scenes::DepthRule& rule) {
    int64_t H = mask.shape[0], W = mask.shape[1];
    std::vector<int64_t> area(256, 0);
    for (int64_t i = 0; i < H * W; ++i) ++area[static_cast<int>(mask[i])];
    Tensor out({H, W});
    for (int64_t y = 0; y < H; ++y) {
        double rf = H > 1 ? static_cast<double>(y) / (H - 1) : 0.0;
        for (int64_t x = 0; x < W; ++x) {
            int id = static_cast<int>(mask[y * W + x]);
            if (id == 0) {
                out[y * W + x] = rule.background(rf);
            } else {
                double radius = std::sqrt(static_cast<double>(area[id]) / M_PI);
                out[y * W + x] = rule.object(radius);
            }
        }
    }
    return out;
}

struct ConsistencyReport {
    double mask_image_agreement = 0;               // mIoU of decode(image) vs mask
    std::optional<double> depth_mask_agreement;    // Spearman vs rule-implied depth
    bool degenerate_mask = false;
};

// Quantifies cross-modal consistency of one generated triple against the
// procedural ground-truth rules.
inline ConsistencyReport consistency_report(const Tensor& image, const Tensor& depth, const Tensor& mask,
                                            const codec::Palette& palette, const scenes::DepthRule& rule) {
    ConsistencyReport rep;
    // (a) interpret the image as a palette field and compare categories
    Tensor field(image.shape);
    for (int64_t i = 0; i < image.numel(); ++i) field[i] = 2.0 * image[i] - 1.0;
    Tensor img_cats = codec::decode_mask(field, palette);
    rep.mask_image_agreement = miou(img_cats, mask, palette.K()).mean;

    // (b) generated depth vs the depth the mask implies under the rule
    bool single_cat = true;
    for (int64_t i = 1; i < mask.numel(); ++i)
        if (mask[i] != mask[0]) {
            single_cat = false;
            break;
        }
    if (single_cat) {
        rep.degenerate_mask = true;
        return rep;
    }
    Tensor imp = implied_depth(mask, rule);
    rep.depth_mask_agreement = spearman(std::vector<double>(depth.data.begin(), depth.data.end()),
                                        std::vector<double>(imp.data.begin(), imp.data.end()));
    return rep;
}

// Per-record metrics averaged across a dataset pair (per-image-then-average).
struct DatasetEval {
    DepthMetrics depth;
    double miou_mean = 0;
    int n = 0;
};

inline DatasetEval evaluate_datasets(const std::vector<scenes::Quadruple>& pred, const std::vector<scenes::Quadruple>& gt,
                                     const codec::Palette& palette, bool median_align = false) {
    if (pred.size() != gt.size() || pred.empty()) throw std::invalid_argument("evaluate_datasets: dataset sizes differ or empty");
    DatasetEval out;
    for (size_t i = 0; i < pred.size(); ++i) {
        auto m = depth_metrics(pred[i].depth, gt[i].depth, all_valid(gt[i].depth), median_align);
        out.depth.si_log += m.si_log;
        out.depth.a_rel += m.a_rel;
        out.depth.log10 += m.log10;
        out.depth.rmse += m.rmse;
        out.depth.s_rel += m.s_rel;
        out.depth.rmse_log += m.rmse_log;
        out.depth.delta1 += m.delta1;
        out.depth.delta2 += m.delta2;
        out.depth.delta3 += m.delta3;
        out.miou_mean += miou(pred[i].mask, gt[i].mask, palette.K()).mean;
        ++out.n;
    }
    double inv = 1.0 / out.n;
    out.depth.si_log *= inv;
    out.depth.a_rel *= inv;
    out.depth.log10 *= inv;
    out.depth.rmse *= inv;
    out.depth.s_rel *= inv;
    out.depth.rmse_log *= inv;
    out.depth.delta1 *= inv;
    out.depth.delta2 *= inv;
    out.depth.delta3 *= inv;
    out.miou_mean *= inv;
    return out;
}

inline std::string dataset_eval_csv(const DatasetEval& e) {
    std::ostringstream ss;
    ss.precision(9);
    ss << "si_log,a_rel,log10,rmse,s_rel,rmse_log,delta1,delta2,delta3,miou,samples\n";
    ss << e.depth.si_log << "," << e.depth.a_rel << "," << e.depth.log10 << "," << e.depth.rmse << "," << e.depth.s_rel
       << "," << e.depth.rmse_log << "," << e.depth.delta1 << "," << e.depth.delta2 << "," << e.depth.delta3 << ","
       << e.miou_mean << "," << e.n << "\n";
    return ss.str();
}

struct AblationRow {
    std::string variant;
    double mean_mask_image = 0;
    double mean_depth_mask = 0;
    int n = 0;
};

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream ss;
    ss << "variant,mean_mask_image_agreement,mean_depth_mask_agreement,samples\n";
    ss.precision(6);
    for (const auto& r : rows) ss << r.variant << "," << r.mean_mask_image << "," << r.mean_depth_mask << "," << r.n << "\n";
    return ss.str();
}

}  // namespace tide::eval
