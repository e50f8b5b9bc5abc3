#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tide/autodiff.hpp"
#include "tide/params.hpp"
#include "tide/rng.hpp"

using namespace tide;
using namespace tide::ad;

namespace {

// central finite differences on a scalar-valued builder
double numeric_grad(Param& p, int64_t i, const std::function<Var()>& build, double h = 1e-6) {
    double orig = p.value[i];
    p.value[i] = orig + h;
    double lp = build()->value[0];
    p.value[i] = orig - h;
    double lm = build()->value[0];
    p.value[i] = orig;
    return (lp - lm) / (2 * h);
}

void check_grads(Param& p, const std::function<Var(Graph&)>& build, double tol = 1e-6) {
    p.zero_grad();
    Graph g;
    Var loss = build(g);
    g.backward(loss);
    for (int64_t i = 0; i < p.value.numel(); ++i) {
        double num = numeric_grad(p, i, [&] {
            Graph g2;
            return build(g2);
        });
        CHECK(p.grad[i] == doctest::Approx(num).epsilon(tol).scale(1.0));
    }
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    Rng rng(1);
    Param x("x", rng.normal_tensor({3, 4}));
    Param y("y", rng.normal_tensor({3, 4}));

    SUBCASE("add/mul/scale chain") {
        check_grads(x, [&](Graph& g) { return mean_all(mul(add(g.leaf(x), g.leaf(y)), scale(g.leaf(x), 2.0))); });
    }
    SUBCASE("sub") {
        check_grads(y, [&](Graph& g) { return mean_all(mul(sub(g.leaf(x), g.leaf(y)), sub(g.leaf(x), g.leaf(y)))); });
    }
    SUBCASE("sigmoid") {
        check_grads(x, [&](Graph& g) { return mean_all(sigmoid(g.leaf(x))); });
    }
    SUBCASE("silu") {
        check_grads(x, [&](Graph& g) { return mean_all(silu(g.leaf(x))); });
    }
    SUBCASE("gelu") {
        check_grads(x, [&](Graph& g) { return mean_all(gelu(g.leaf(x))); });
    }
}

TEST_CASE("matmul gradients") {
    Rng rng(2);
    Param a("a", rng.normal_tensor({3, 5}));
    Param b("b", rng.normal_tensor({5, 2}));
    check_grads(a, [&](Graph& g) { return mean_all(matmul(g.leaf(a), g.leaf(b))); });
    check_grads(b, [&](Graph& g) { return mean_all(mul(matmul(g.leaf(a), g.leaf(b)), matmul(g.leaf(a), g.leaf(b)))); });

    Param c("c", rng.normal_tensor({4, 5}));
    check_grads(c, [&](Graph& g) { return mean_all(matmul_nt(g.leaf(a), g.leaf(c))); });
}

TEST_CASE("softmax rows is a distribution and has correct gradients") {
    Rng rng(3);
    Param a("a", rng.normal_tensor({4, 6}));
    Graph g;
    Var s = softmax_rows(g.leaf(a));
    for (int64_t i = 0; i < 4; ++i) {
        double sum = 0;
        for (int64_t j = 0; j < 6; ++j) {
            CHECK(s->value.at(i, j) >= 0.0);
            sum += s->value.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    check_grads(a, [&](Graph& g2) { return mean_all(mul(softmax_rows(g2.leaf(a)), softmax_rows(g2.leaf(a)))); });
}

TEST_CASE("layernorm, broadcasts, gather, permute gradients") {
    Rng rng(4);
    Param a("a", rng.normal_tensor({3, 8}));
    Param v("v", rng.normal_tensor({8}));

    check_grads(a, [&](Graph& g) { return mean_all(mul(layernorm_rows(g.leaf(a)), layernorm_rows(g.leaf(a)))); }, 1e-5);
    check_grads(v, [&](Graph& g) { return mean_all(mul(add_rowvec(g.leaf(a), g.leaf(v)), mul_rowvec(g.leaf(a), g.leaf(v)))); });

    Param table("t", rng.normal_tensor({5, 4}));
    std::vector<int64_t> ids = {1, 3, 1};
    check_grads(table, [&](Graph& g) { return mean_all(mul(gather_rows(g.leaf(table), ids), gather_rows(g.leaf(table), ids))); });

    std::vector<int64_t> perm = {3, 1, 0, 2};
    Param p4("p4", rng.normal_tensor({4}));
    check_grads(p4, [&](Graph& g) { return mean_all(mul(permute(g.leaf(p4), perm, {4}), g.leaf(p4))); });
}

TEST_CASE("scale_by scalar var gradient flows to both sides") {
    Rng rng(5);
    Param a("a", rng.normal_tensor({2, 3}));
    Param s("s", Tensor::scalar(0.7));
    check_grads(a, [&](Graph& g) { return mean_all(scale_by(g.leaf(a), sigmoid(g.leaf(s)))); });
    check_grads(s, [&](Graph& g) { return mean_all(mul(scale_by(g.leaf(a), sigmoid(g.leaf(s))), g.leaf(a))); });
}

TEST_CASE("mse basics") {
    Graph g;
    Var pred = constant(Tensor({2}, {1.0, 2.0}));
    Var target = constant(Tensor({2}, {0.0, 0.0}));
    CHECK(mse(pred, target)->value[0] == doctest::Approx(2.5));
}

TEST_CASE("parameter reused at several sites accumulates once per use") {
    Rng rng(6);
    Param w("w", rng.normal_tensor({3, 3}));
    check_grads(w, [&](Graph& g) {
        Var x = g.leaf(w);
        return mean_all(add(matmul(x, x), x));  // both operands are the same leaf
    });
}

TEST_CASE("graph flush accumulates into Param::grad additively across graphs") {
    Param w("w", Tensor::full({2}, 1.0));
    w.zero_grad();
    for (int rep = 0; rep < 3; ++rep) {
        Graph g;
        g.backward(mean_all(mul(g.leaf(w), g.leaf(w))));
    }
    // d/dw mean(w^2) = w = 1 per pass, three passes
    CHECK(w.grad[0] == doctest::Approx(3.0));
}

TEST_CASE("backward rejects non-scalar roots") {
    Graph g;
    Param w("w", Tensor::full({2}, 1.0));
    CHECK_THROWS_AS(g.backward(g.leaf(w)), std::invalid_argument);
}

TEST_CASE("adamw descends a quadratic deterministically") {
    auto run = [] {
        Param w("w", Tensor::full({4}, 5.0));
        std::vector<Param*> ps = {&w};
        AdamW opt({.lr = 0.1});
        for (int i = 0; i < 200; ++i) {
            w.zero_grad();
            Graph g;
            g.backward(mean_all(mul(g.leaf(w), g.leaf(w))));
            opt.step(ps);
        }
        return w.value;
    };
    Tensor a = run(), b = run();
    for (int64_t i = 0; i < 4; ++i) {
        CHECK(std::abs(a[i]) < 0.05);
        CHECK(a[i] == b[i]);  // bitwise deterministic
    }
}
