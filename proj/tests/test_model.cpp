#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tide/model.hpp"

using namespace tide;
using ad::Var;

namespace {

// small geometry keeps each forward cheap
model::ModelConfig tiny_config() {
    model::ModelConfig cfg;
    cfg.height = cfg.width = 8;
    cfg.patch = 4;
    cfg.c = 8;
    cfg.image_layers = 4;
    cfg.mini_layers = 2;
    cfg.ff_mult = 2;
    cfg.share_start = 0;
    cfg.share_end = 3;
    cfg.share_stride = 2;
    cfg.lora_rank_image = 2;
    cfg.lora_rank_depth = 2;
    cfg.lora_rank_mask = 2;
    return cfg;
}

Tensor latent(uint64_t seed, const model::ModelConfig& cfg) {
    Rng rng(seed);
    return rng.normal_tensor({cfg.height, cfg.width, cfg.channels});
}

bool equal(const Tensor& a, const Tensor& b) { return a.shape == b.shape && a.data == b.data; }

}  // namespace

TEST_CASE("build_share_map enumerations") {
    auto full = model::build_share_map(28, 10, 0, 27, 3);
    REQUIRE(full.size() == 10);
    for (int j = 0; j < 10; ++j) {
        CHECK(full[j].first == 3 * j);
        CHECK(full[j].second == j);
    }

    auto desk = model::build_share_map(8, 4, 0, 7, 2);
    REQUIRE(desk.size() == 4);
    for (int j = 0; j < 4; ++j) {
        CHECK(desk[j].first == 2 * j);
        CHECK(desk[j].second == j);
    }

    auto single = model::build_share_map(8, 4, 0, 0, 3);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == std::pair<int, int>{0, 0});

    CHECK_THROWS_AS(model::build_share_map(8, 4, 0, 7, 0), std::invalid_argument);
    CHECK_THROWS_AS(model::build_share_map(8, 4, 5, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(model::build_share_map(8, 4, 0, 8, 1), std::invalid_argument);
    CHECK_THROWS_AS(model::build_share_map(8, 0, 0, 7, 1), std::invalid_argument);

    // strictly increasing in both coordinates, annotation index unique
    for (size_t i = 1; i < desk.size(); ++i) {
        CHECK(desk[i].first > desk[i - 1].first);
        CHECK(desk[i].second > desk[i - 1].second);
    }
}

TEST_CASE("init_mini_from_image copies and stays equal on forward") {
    auto cfg = tiny_config();
    Rng rng(101);
    model::Branch image(cfg, cfg.image_layers, rng, "image");

    auto mini = model::init_mini_from_image(image, cfg.image_layers, "mini");
    std::vector<Param*> a, b;
    image.collect(a);
    mini.collect(b);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(equal(a[i]->value, b[i]->value));

    auto one = model::init_mini_from_image(image, 1, "one");
    CHECK(one.layer_count() == 1);
    CHECK(equal(one.blocks[0].self_attn.q.W.value, image.blocks[0].self_attn.q.W.value));

    CHECK_THROWS_AS(model::init_mini_from_image(image, 0, "x"), std::out_of_range);
    CHECK_THROWS_AS(model::init_mini_from_image(image, 99, "x"), std::out_of_range);

    // truncated copy forwards identically to the image prefix it copied
    auto trunc = model::init_mini_from_image(image, 2, "trunc");
    Tensor z = latent(1, cfg);
    Rng crng(5);
    Tensor ctx_t = crng.normal_tensor({3, cfg.c});
    Graph g;
    Var ctx = g.input(ctx_t);
    Var xi = image.embed_tokens(g, z);
    Var ti = image.time_features(g, 4);
    for (int i = 0; i < 2; ++i) xi = image.run_block(g, i, xi, ti, ctx, nullptr).x;

    Var xm = trunc.embed_tokens(g, z);
    Var tm = trunc.time_features(g, 4);
    for (int i = 0; i < 2; ++i) xm = trunc.run_block(g, i, xm, tm, ctx, nullptr).x;
    CHECK(equal(xi->value, xm->value));
}

TEST_CASE("forward_joint preserves shapes and is deterministic") {
    auto cfg = tiny_config();
    auto m1 = model::TideModel::build(cfg, 77);
    auto m2 = model::TideModel::build(cfg, 77);
    auto tokens = nn::tokenize("a fish over a dark seabed", m1.text.vocab);
    Tensor zi = latent(1, cfg), zd = latent(2, cfg), zm = latent(3, cfg);

    Graph g1, g2;
    auto o1 = m1.forward_joint(g1, zi, zd, zm, 5, tokens, {true, true});
    auto o2 = m2.forward_joint(g2, zi, zd, zm, 5, tokens, {true, true});
    std::vector<int64_t> want = {cfg.height, cfg.width, cfg.channels};
    CHECK(o1.eps_image->value.shape == want);
    CHECK(o1.eps_depth->value.shape == want);
    CHECK(o1.eps_mask->value.shape == want);
    CHECK(equal(o1.eps_image->value, o2.eps_image->value));
    CHECK(equal(o1.eps_depth->value, o2.eps_depth->value));
    CHECK(equal(o1.eps_mask->value, o2.eps_mask->value));

    Tensor bad({2, 2, 3});
    Graph g3;
    CHECK_THROWS_AS(m1.forward_joint(g3, bad, zd, zm, 5, tokens, {true, true}), std::invalid_argument);
}

TEST_CASE("with both toggles off the branches are independent denoisers") {
    auto cfg = tiny_config();
    auto m = model::TideModel::build(cfg, 9);
    auto tokens = nn::tokenize("a reef", m.text.vocab);
    Tensor zi = latent(1, cfg), zd = latent(2, cfg), zm = latent(3, cfg);

    Graph g1;
    auto a = m.forward_joint(g1, zi, zd, zm, 3, tokens, {false, false});
    Graph g2;
    auto b = m.forward_joint(g2, zi, latent(8, cfg), latent(9, cfg), 3, tokens, {false, false});
    CHECK(equal(a.eps_image->value, b.eps_image->value));
    CHECK_FALSE(equal(a.eps_depth->value, b.eps_depth->value));

    // and a single-branch forward agrees with the joint image output
    Graph g3;
    Var ctx = m.text.encode(g3, tokens);
    Var solo = m.image.forward(g3, zi, 3, ctx);
    CHECK(equal(a.eps_image->value, solo->value));
}

TEST_CASE("shared layouts are bit-identical at every mapped site") {
    auto cfg = tiny_config();
    auto m = model::TideModel::build(cfg, 10);
    auto tokens = nn::tokenize("a wreck over a murky seabed", m.text.vocab);
    Tensor zi = latent(4, cfg), zd = latent(5, cfg), zm = latent(6, cfg);

    model::LayoutTrace trace;
    Graph g;
    m.forward_joint(g, zi, zd, zm, 7, tokens, {true, true}, &trace);
    REQUIRE(trace.produced.size() == m.share_map.size());
    for (size_t i = 0; i < trace.produced.size(); ++i) {
        CHECK(equal(trace.produced[i], trace.consumed_depth[i]));
        CHECK(equal(trace.produced[i], trace.consumed_mask[i]));
        // every row of the shared map is a distribution
        const auto& t = trace.produced[i];
        for (int64_t r = 0; r < t.rows(); ++r) {
            double sum = 0;
            for (int64_t c = 0; c < t.cols(); ++c) {
                CHECK(t.at(r, c) >= 0.0);
                sum += t.at(r, c);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }

    // without sharing, each branch computes its own (different) map
    model::LayoutTrace solo;
    Graph g2;
    m.forward_joint(g2, zi, zd, zm, 7, tokens, {false, false}, &solo);
    CHECK_FALSE(equal(solo.produced[0], solo.consumed_depth[0]));
}

TEST_CASE("fresh TAN layers make tan toggle a bitwise no-op") {
    auto cfg = tiny_config();
    auto m = model::TideModel::build(cfg, 11);
    auto tokens = nn::tokenize("a diver", m.text.vocab);
    Tensor zi = latent(1, cfg), zd = latent(2, cfg), zm = latent(3, cfg);
    Graph g1, g2;
    auto with_tan = m.forward_joint(g1, zi, zd, zm, 2, tokens, {true, true});
    auto without = m.forward_joint(g2, zi, zd, zm, 2, tokens, {true, false});
    CHECK(equal(with_tan.eps_image->value, without.eps_image->value));
    CHECK(equal(with_tan.eps_depth->value, without.eps_depth->value));
    CHECK(equal(with_tan.eps_mask->value, without.eps_mask->value));
}

TEST_CASE("annotation branches copied at full depth reproduce the image branch") {
    auto cfg = tiny_config();
    cfg.image_layers = 2;
    cfg.mini_layers = 2;
    cfg.share_start = 0;
    cfg.share_end = 1;
    cfg.share_stride = 1;
    auto m = model::TideModel::build(cfg, 12);
    m.depth = model::init_mini_from_image(m.image, 2, "depth");
    m.mask = model::init_mini_from_image(m.image, 2, "mask");
    auto tokens = nn::tokenize("a plant over a sandy seabed", m.text.vocab);
    Tensor z = latent(21, cfg);
    Graph g;
    auto out = m.forward_joint(g, z, z, z, 6, tokens, {true, true});
    CHECK(equal(out.eps_image->value, out.eps_depth->value));
    CHECK(equal(out.eps_image->value, out.eps_mask->value));
}

TEST_CASE("trainable_parameters is exactly the LoRA+TAN set") {
    auto cfg = tiny_config();
    auto m = model::TideModel::build(cfg, 13);

    // no adapters attached: only TAN tensors qualify
    auto pre = m.trainable_parameters();
    for (Param* p : pre) CHECK(p->name.rfind("tan.", 0) == 0);
    CHECK(pre.size() == m.tan_sites.size() * 3 * 10);

    Rng rng(14);
    m.attach_all_lora(rng);
    auto post = m.trainable_parameters();
    size_t lora_tensors = 0;
    for (Param* p : post) {
        bool is_lora = p->name.find(".lora_") != std::string::npos;
        bool is_tan = p->name.rfind("tan.", 0) == 0;
        CHECK((is_lora || is_tan));
        if (is_lora) ++lora_tensors;
    }
    // 2 tensors per adapter, 4 projections per attention, 2 attentions per
    // block across all three branches
    CHECK(lora_tensors == 2u * 4u * 2u * static_cast<size_t>(cfg.image_layers + 2 * cfg.mini_layers));

    // a rank-r adapter on a c-wide projection holds exactly 2 r c numbers
    auto& ad0 = *m.image.blocks[0].self_attn.q.lora;
    CHECK(ad0.A.value.numel() + ad0.B.value.numel() == 2 * cfg.lora_rank_image * cfg.c);
}

TEST_CASE("stage-B freeze: gradients reach the image LoRA only through sharing") {
    auto cfg = tiny_config();
    auto m = model::TideModel::build(cfg, 15);
    Rng rng(16);
    m.attach_all_lora(rng);
    // move LoRA B off zero so gradient chains through both factors
    for (Param* p : m.trainable_parameters())
        if (p->name.find(".lora_b") != std::string::npos) p->value = rng.normal_tensor(p->value.shape, 0.05);
    m.apply_stage_b_freeze();

    auto tokens = nn::tokenize("a robot", m.text.vocab);
    Tensor zi = latent(1, cfg), zd = latent(2, cfg), zm = latent(3, cfg);

    auto depth_loss_grads = [&](bool ils) {
        for (Param* p : m.all_parameters()) p->zero_grad();
        Graph g;
        auto out = m.forward_joint(g, zi, zd, zm, 4, tokens, {ils, false});
        g.backward(ad::mse(out.eps_depth, g.input(Tensor::zeros(out.eps_depth->value.shape))));
        double image_lora = 0.0, base = 0.0;
        for (Param* p : m.all_parameters()) {
            double s = 0.0;
            for (double v : p->grad.data) s += std::abs(v);
            if (p->name.rfind("image.", 0) == 0 && p->name.find(".lora_") != std::string::npos) image_lora += s;
            if (p->name.find(".lora_") == std::string::npos && p->name.rfind("tan.", 0) != 0) base += s;
        }
        return std::pair{image_lora, base};
    };

    auto [with_ils, base1] = depth_loss_grads(true);
    CHECK(with_ils > 0.0);
    CHECK(base1 == 0.0);  // frozen bases get no gradient at all
    auto [without_ils, base2] = depth_loss_grads(false);
    CHECK(without_ils == 0.0);
    CHECK(base2 == 0.0);
}
