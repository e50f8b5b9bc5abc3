#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tide/codec.hpp"
#include "tide/io.hpp"
#include "tide/rng.hpp"
#include "tide/tensor.hpp"

namespace tide::scenes {

// One {image, depth, mask, caption} training record.
//   image: H x W x 3 in [0,1]
//   depth: H x W in [0,1], 0 = nearest
//   mask:  H x W category grid
struct Quadruple {
    Tensor image;
    Tensor depth;
    Tensor mask;
    std::string caption;
};

// Depth assignment rule shared between the generator and the consistency
// evaluator; recorded in the dataset manifest header.
struct DepthRule {
    double bg_base = 0.9;
    double bg_slope = 0.1;       // background depth = bg_base + bg_slope * row_fraction
    double obj_base = 0.2;
    double obj_range = 0.5;      // object depth = obj_base + obj_range * (1 - r / r_max)
    double r_max = 6.0;

    double background(double row_frac) const { return bg_base + bg_slope * row_frac; }
    double object(double radius) const { return obj_base + obj_range * (1.0 - std::min(radius, r_max) / r_max); }
};

struct Grammar {
    int height = 16;
    int width = 16;
    int min_objects = 1;
    int max_objects = 2;
    double min_radius = 2.5;
    double max_radius = 5.5;
    double shade_amp = 0.06;     // radial shading inside objects, <= 0.1 bound
    double bg_amp = 0.08;        // background gradient amplitude
    codec::Palette palette = codec::default_palette();
    std::vector<std::string> adjectives = {"plain", "sandy", "dark", "bright", "murky"};
    DepthRule depth_rule;

    void validate() const {
        if (palette.K() < 2) throw std::invalid_argument("grammar: need >= 2 categories");
        if (!(min_radius <= max_radius) || min_objects < 1 || max_objects > 4 || min_objects > max_objects)
            throw std::invalid_argument("grammar: bounds out of order");
    }
};

struct SceneObject {
    int category = 1;  // palette index, >= 1 (0 is background)
    double cx = 0, cy = 0;
    double radius = 0;
    double depth = 0;
    double aspect = 1.0;  // ellipse y/x axis ratio
};

struct SceneSpec {
    uint64_t seed = 0;
    std::vector<SceneObject> objects;
    int adjective = 0;
    double bg_dir = 1.0;  // gradient direction sign
};

inline std::array<double, 3> render_color(const codec::Palette& p, int id) {
    return {0.5 * (p.colors[id][0] + 1.0), 0.5 * (p.colors[id][1] + 1.0), 0.5 * (p.colors[id][2] + 1.0)};
}

inline std::string make_caption(const Grammar& g, const SceneSpec& spec) {
    std::string s;
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        if (i) s += " and ";
        s += "a " + g.palette.names[spec.objects[i].category];
    }
    s += " over a " + g.adjectives[spec.adjective] + " seabed";
    return s;
}

inline SceneSpec plan_scene(uint64_t seed, const Grammar& g) {
    g.validate();
    Rng rng(mix_keys(seed, 0x7ce2e5c5u));
    SceneSpec spec;
    spec.seed = seed;
    spec.adjective = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(g.adjectives.size()) - 1));
    spec.bg_dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
    int n = static_cast<int>(rng.uniform_int(g.min_objects, g.max_objects));

    // distinct categories so caption<->mask checks stay simple
    std::vector<int> cats;
    for (int id = 1; id < g.palette.K(); ++id) cats.push_back(id);
    for (int i = 0; i < n; ++i) {
        int pick = static_cast<int>(rng.uniform_int(i, static_cast<int64_t>(cats.size()) - 1));
        std::swap(cats[i], cats[pick]);
    }

    for (int i = 0; i < n; ++i) {
        SceneObject obj;
        obj.category = cats[i];
        // rejection-sample a placement that keeps objects disjoint and in
        // frame, shrinking the radius bound as attempts fail; an object that
        // cannot be placed is dropped (the caption follows the object list)
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            double hi = std::max(g.min_radius, g.max_radius - 0.02 * attempt * (g.max_radius - g.min_radius));
            obj.radius = rng.uniform(g.min_radius, hi);
            obj.aspect = rng.uniform(0.8, 1.2);
            obj.cx = rng.uniform(obj.radius, g.width - 1 - obj.radius);
            obj.cy = rng.uniform(obj.radius, g.height - 1 - obj.radius);
            placed = true;
            for (const auto& other : spec.objects) {
                double dx = obj.cx - other.cx, dy = obj.cy - other.cy;
                if (std::sqrt(dx * dx + dy * dy) < obj.radius + other.radius + 1.0) placed = false;
            }
        }
        if (!placed) continue;
        obj.depth = g.depth_rule.object(obj.radius);
        spec.objects.push_back(obj);
    }
    if (spec.objects.empty()) {
        // guaranteed placement: a single min-radius object at center
        SceneObject obj;
        obj.category = cats[0];
        obj.radius = g.min_radius;
        obj.cx = 0.5 * (g.width - 1);
        obj.cy = 0.5 * (g.height - 1);
        obj.depth = g.depth_rule.object(obj.radius);
        spec.objects.push_back(obj);
    }
    return spec;
}

inline Quadruple render_scene(const SceneSpec& spec, const Grammar& g) {
    int H = g.height, W = g.width;
    Quadruple q;
    q.image = Tensor({H, W, 3});
    q.depth = Tensor({H, W});
    q.mask = Tensor({H, W});
    auto bg = render_color(g.palette, 0);
    for (int y = 0; y < H; ++y) {
        double rf = H > 1 ? static_cast<double>(y) / (H - 1) : 0.0;
        double shade = g.bg_amp * spec.bg_dir * (rf - 0.5);
        for (int x = 0; x < W; ++x) {
            int64_t i = static_cast<int64_t>(y) * W + x;
            for (int k = 0; k < 3; ++k) q.image[i * 3 + k] = std::clamp(bg[k] + shade, 0.0, 1.0);
            q.depth[i] = g.depth_rule.background(rf);
            q.mask[i] = 0.0;
        }
    }
    // back-to-front: farthest (largest depth value) first
    std::vector<SceneObject> order = spec.objects;
    std::stable_sort(order.begin(), order.end(), [](const SceneObject& a, const SceneObject& b) { return a.depth > b.depth; });
    for (const auto& obj : order) {
        auto col = render_color(g.palette, obj.category);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double dx = (x - obj.cx) / obj.radius;
                double dy = (y - obj.cy) / (obj.radius * obj.aspect);
                double r2 = dx * dx + dy * dy;
                if (r2 <= 1.0) {
                    int64_t i = static_cast<int64_t>(y) * W + x;
                    double shade = 1.0 - g.shade_amp * r2;
                    for (int k = 0; k < 3; ++k) q.image[i * 3 + k] = std::clamp(col[k] * shade, 0.0, 1.0);
                    q.depth[i] = obj.depth;
                    q.mask[i] = static_cast<double>(obj.category);
                }
            }
    }
    // quantize to f32-representable values so the on-disk f32 round trip
    // is bit-exact
    for (double& v : q.image.data) v = static_cast<float>(v);
    for (double& v : q.depth.data) v = static_cast<float>(v);
    q.caption = make_caption(g, spec);
    return q;
}

inline Quadruple generate_scene(uint64_t seed, const Grammar& g) { return render_scene(plan_scene(seed, g), g); }

// Checks the Quadruple invariants; returns an empty string when valid.
inline std::string validate_quadruple(const Quadruple& q, const Grammar& g) {
    int64_t H = q.image.shape[0], W = q.image.shape[1];
    if (q.depth.shape != std::vector<int64_t>{H, W} || q.mask.shape != std::vector<int64_t>{H, W}) return "shape mismatch across modalities";
    std::vector<int64_t> area(g.palette.K(), 0);
    for (int64_t i = 0; i < H * W; ++i) {
        int id = static_cast<int>(q.mask[i]);
        if (id < 0 || id >= g.palette.K()) return "mask category out of range";
        ++area[id];
        if (!(q.depth[i] >= 0.0 && q.depth[i] <= 1.0)) return "depth outside [0,1]";
        for (int k = 0; k < 3; ++k)
            if (!(q.image[i * 3 + k] >= 0.0 && q.image[i * 3 + k] <= 1.0)) return "image outside [0,1]";
        if (id > 0) {
            auto col = render_color(g.palette, id);
            for (int k = 0; k < 3; ++k)
                if (std::abs(q.image[i * 3 + k] - col[k]) > 0.1 + 1e-12) return "object pixel off canonical color";
        }
    }
    // caption <-> mask agreement
    for (int id = 1; id < g.palette.K(); ++id) {
        bool in_caption = q.caption.find(g.palette.names[id]) != std::string::npos;
        bool in_mask = area[id] > 0;
        if (in_caption != in_mask) return "caption/mask category mismatch: " + g.palette.names[id];
    }
    // depth rule: object pixels strictly nearer than any background pixel
    double min_bg = 2.0, max_obj = -1.0;
    for (int64_t i = 0; i < H * W; ++i) {
        if (static_cast<int>(q.mask[i]) == 0)
            min_bg = std::min(min_bg, q.depth[i]);
        else
            max_obj = std::max(max_obj, q.depth[i]);
    }
    if (max_obj >= 0.0 && max_obj >= min_bg) return "object not nearer than background";
    return "";
}

// ---- dataset on disk ----

struct ManifestRecord {
    std::string id;
    std::string caption;
    std::string image_file, depth_file, mask_file;
    uint32_t image_crc = 0, depth_crc = 0, mask_crc = 0;
};

inline nlohmann::json depth_rule_json(const DepthRule& r) {
    return {{"bg_base", r.bg_base}, {"bg_slope", r.bg_slope}, {"obj_base", r.obj_base}, {"obj_range", r.obj_range}, {"r_max", r.r_max}};
}

inline DepthRule depth_rule_from_json(const nlohmann::json& j) {
    DepthRule r;
    r.bg_base = j.at("bg_base");
    r.bg_slope = j.at("bg_slope");
    r.obj_base = j.at("obj_base");
    r.obj_range = j.at("obj_range");
    r.r_max = j.at("r_max");
    return r;
}

// One tensor file per modality per record plus a line-delimited manifest.
// The first manifest line is a header object carrying the depth rule.
inline void write_dataset(const std::vector<Quadruple>& records, const std::filesystem::path& dir, const DepthRule& rule = {}) {
    std::filesystem::create_directories(dir);
    std::ofstream mf(dir / "manifest.jsonl", std::ios::trunc);
    if (!mf) throw std::runtime_error("cannot write manifest in " + dir.string());
    nlohmann::json header = {{"header", "tide-dataset"}, {"version", 1}, {"depth_rule", depth_rule_json(rule)}};
    mf << header.dump() << "\n";
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& q = records[i];
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "%06zu", i);
        std::string id(idbuf);
        ManifestRecord r;
        r.id = id;
        r.caption = q.caption;
        r.image_file = id + "_image.tide";
        r.depth_file = id + "_depth.tide";
        r.mask_file = id + "_mask.tide";
        r.image_crc = io::write_tensor_file(dir / r.image_file, q.image, io::Dtype::f32);
        r.depth_crc = io::write_tensor_file(dir / r.depth_file, q.depth, io::Dtype::f32);
        r.mask_crc = io::write_tensor_file(dir / r.mask_file, q.mask, io::Dtype::u8);
        nlohmann::json line = {
            {"id", r.id},
            {"caption", r.caption},
            {"files", {{"image", r.image_file}, {"depth", r.depth_file}, {"mask", r.mask_file}}},
            {"crc32c", {{"image", r.image_crc}, {"depth", r.depth_crc}, {"mask", r.mask_crc}}},
        };
        mf << line.dump() << "\n";
    }
    if (!mf) throw std::runtime_error("manifest write failed in " + dir.string());
}

struct Dataset {
    std::vector<Quadruple> records;
    DepthRule depth_rule;
};

inline Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.jsonl");
    if (!mf) throw std::runtime_error("cannot open manifest in " + dir.string());
    Dataset ds;
    std::string line;
    bool first = true;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("malformed manifest line: " + std::string(e.what()));
        }
        if (first && j.contains("header")) {
            if (j.contains("depth_rule")) ds.depth_rule = depth_rule_from_json(j["depth_rule"]);
            first = false;
            continue;
        }
        first = false;
        Quadruple q;
        q.caption = j.at("caption");
        auto files = j.at("files");
        auto crcs = j.at("crc32c");
        auto load = [&](const char* key, Tensor& out) {
            uint32_t crc = 0;
            out = io::read_tensor_file(dir / files.at(key).get<std::string>(), &crc);
            if (crc != crcs.at(key).get<uint32_t>())
                throw std::runtime_error("checksum mismatch for record " + j.at("id").get<std::string>() + " " + key);
        };
        load("image", q.image);
        load("depth", q.depth);
        load("mask", q.mask);
        ds.records.push_back(std::move(q));
    }
    return ds;
}

// N-samples-per-caption fanout: dedup captions (keep first occurrence) and
// pair each with n distinct seeds.
struct SynthesisJob {
    std::string caption;
    uint64_t seed;
};

inline std::vector<SynthesisJob> expand_captions(const std::vector<std::string>& captions, int n, uint64_t base_seed = 0) {
    if (n < 1) throw std::invalid_argument("expand_captions: n must be >= 1");
    std::vector<std::string> unique;
    for (const auto& c : captions)
        if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
    std::vector<SynthesisJob> jobs;
    jobs.reserve(unique.size() * static_cast<size_t>(n));
    for (size_t i = 0; i < unique.size(); ++i)
        for (int k = 0; k < n; ++k) jobs.push_back({unique[i], mix_keys(base_seed, i, static_cast<uint64_t>(k))});
    return jobs;
}

}  // namespace tide::scenes
