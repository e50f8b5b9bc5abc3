#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "tide/tensor.hpp"

namespace tide::ad {

// Minimal reverse-mode tape. Nodes own their value and (lazily allocated)
// gradient; the graph is rebuilt per forward pass. Node ids are issued in
// creation order so the backward sweep is a fixed-order reduction — the
// training loop relies on this for bit-determinism.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    uint64_t id = 0;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.shape != value.shape) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

namespace detail {
inline uint64_t next_id() {
    static thread_local uint64_t counter = 0;
    return ++counter;
}
}  // namespace detail

inline Var make_var(Tensor value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->id = detail::next_id();
    return n;
}

inline Var constant(Tensor value) { return make_var(std::move(value), false); }

inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    bool rg = false;
    for (auto& p : parents) rg = rg || p->requires_grad;
    auto n = make_var(std::move(value), rg);
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward);
    }
    return n;
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

inline ECMap mat(const Tensor& t) { return ECMap(t.data.data(), t.rows(), t.cols()); }
inline EMap mat(Tensor& t) { return EMap(t.data.data(), t.rows(), t.cols()); }

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& v : out.data) v *= s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * n.grad[i];
    });
}

inline Var add_const(const Var& a, double c) {
    Tensor out = a->value;
    for (auto& v : out.data) v += c;
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

// multiply a tensor by a scalar-valued Var (numel()==1)
inline Var scale_by(const Var& a, const Var& s) {
    if (s->value.numel() != 1) throw std::invalid_argument("scale_by: scalar expected");
    double sv = s->value[0];
    Tensor out = a->value;
    for (auto& v : out.data) v *= sv;
    return make_op(std::move(out), {a, s}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        double sv = n.parents[1]->value[0];
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += sv * n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->ensure_grad();
            double acc = 0.0;
            for (int64_t i = 0; i < av.numel(); ++i) acc += n.grad[i] * av[i];
            g[0] += acc;
        }
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) {
            double y = n.value[i];
            g[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

inline Var silu(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = v / (1.0 + std::exp(-v));
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        const Tensor& x = n.parents[0]->value;
        for (int64_t i = 0; i < g.numel(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-x[i]));
            g[i] += n.grad[i] * (s + x[i] * s * (1.0 - s));
        }
    });
}

inline Var gelu(const Var& a) {
    // exact erf form
    Tensor out = a->value;
    for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        const Tensor& x = n.parents[0]->value;
        const double inv_sqrt_2pi = 0.3989422804014326779;
        for (int64_t i = 0; i < g.numel(); ++i) {
            double cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
            double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
            g[i] += n.grad[i] * (cdf + x[i] * pdf);
        }
    });
}

// ---- matrix ops ----

inline Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows())
        throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(a->value) + " x " + shape_str(b->value));
    Tensor out({a->value.rows(), b->value.cols()});
    mat(out) = mat(a->value) * mat(b->value);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->ensure_grad();
            mat(g) += mat(n.grad) * mat(bv).transpose();
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->ensure_grad();
            mat(g) += mat(av).transpose() * mat(n.grad);
        }
    });
}

// a (n x k) times b^T (m x k) -> n x m; avoids materializing transposes.
inline Var matmul_nt(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.cols())
        throw std::invalid_argument("matmul_nt: inner dimension mismatch " + shape_str(a->value) + " x " + shape_str(b->value) + "^T");
    Tensor out({a->value.rows(), b->value.rows()});
    mat(out) = mat(a->value) * mat(b->value).transpose();
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->ensure_grad();
            mat(g) += mat(n.grad) * mat(bv);
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->ensure_grad();
            mat(g) += mat(n.grad).transpose() * mat(av);
        }
    });
}

// broadcast a length-c row vector across every row of a (n x c)
inline Var add_rowvec(const Var& a, const Var& v) {
    if (a->value.cols() != v->value.numel()) throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor out = a->value;
    int64_t n = out.rows(), c = out.cols();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) out.data[i * c + j] += v->value[j];
    return make_op(std::move(out), {a, v}, [](Node& n_) {
        int64_t n = n_.value.rows(), c = n_.value.cols();
        if (n_.parents[0]->requires_grad) {
            auto& g = n_.parents[0]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n_.grad[i];
        }
        if (n_.parents[1]->requires_grad) {
            auto& g = n_.parents[1]->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < c; ++j) g[j] += n_.grad[i * c + j];
        }
    });
}

inline Var mul_rowvec(const Var& a, const Var& v) {
    if (a->value.cols() != v->value.numel()) throw std::invalid_argument("mul_rowvec: width mismatch");
    Tensor out = a->value;
    int64_t n = out.rows(), c = out.cols();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) out.data[i * c + j] *= v->value[j];
    return make_op(std::move(out), {a, v}, [](Node& n_) {
        const Tensor& av = n_.parents[0]->value;
        const Tensor& vv = n_.parents[1]->value;
        int64_t n = av.rows(), c = av.cols();
        if (n_.parents[0]->requires_grad) {
            auto& g = n_.parents[0]->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < c; ++j) g[i * c + j] += n_.grad[i * c + j] * vv[j];
        }
        if (n_.parents[1]->requires_grad) {
            auto& g = n_.parents[1]->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < c; ++j) g[j] += n_.grad[i * c + j] * av[i * c + j];
        }
    });
}

inline Var softmax_rows(const Var& a) {
    Tensor out = a->value;
    int64_t n = out.rows(), c = out.cols();
    for (int64_t i = 0; i < n; ++i) {
        double mx = out.data[i * c];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, out.data[i * c + j]);
        double sum = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double e = std::exp(out.data[i * c + j] - mx);
            out.data[i * c + j] = e;
            sum += e;
        }
        for (int64_t j = 0; j < c; ++j) out.data[i * c + j] /= sum;
    }
    return make_op(std::move(out), {a}, [](Node& n_) {
        if (!n_.parents[0]->requires_grad) return;
        auto& g = n_.parents[0]->ensure_grad();
        int64_t n = n_.value.rows(), c = n_.value.cols();
        for (int64_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < c; ++j) dot += n_.grad[i * c + j] * n_.value[i * c + j];
            for (int64_t j = 0; j < c; ++j) g[i * c + j] += n_.value[i * c + j] * (n_.grad[i * c + j] - dot);
        }
    });
}

// rowwise zero-mean unit-variance normalization (no affine part)
inline Var layernorm_rows(const Var& a, double eps = 1e-6) {
    const Tensor& x = a->value;
    int64_t n = x.rows(), c = x.cols();
    Tensor out(x.shape);
    Tensor inv_std({n});
    for (int64_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < c; ++j) mean += x.data[i * c + j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double d = x.data[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int64_t j = 0; j < c; ++j) out.data[i * c + j] = (x.data[i * c + j] - mean) * is;
    }
    return make_op(std::move(out), {a}, [inv_std](Node& n_) {
        if (!n_.parents[0]->requires_grad) return;
        auto& g = n_.parents[0]->ensure_grad();
        int64_t n = n_.value.rows(), c = n_.value.cols();
        for (int64_t i = 0; i < n; ++i) {
            double gsum = 0.0, gysum = 0.0;
            for (int64_t j = 0; j < c; ++j) {
                gsum += n_.grad[i * c + j];
                gysum += n_.grad[i * c + j] * n_.value[i * c + j];
            }
            double invc = 1.0 / static_cast<double>(c);
            for (int64_t j = 0; j < c; ++j) {
                double y = n_.value[i * c + j];
                g[i * c + j] += inv_std[i] * (n_.grad[i * c + j] - invc * gsum - invc * y * gysum);
            }
        }
    });
}

// gather rows of a table by index (embedding lookup); backward scatter-adds
inline Var gather_rows(const Var& table, const std::vector<int64_t>& ids) {
    int64_t c = table->value.cols();
    int64_t v = table->value.rows();
    for (int64_t id : ids)
        if (id < 0 || id >= v) throw std::out_of_range("gather_rows: id out of bounds");
    Tensor out({static_cast<int64_t>(ids.size()), c});
    for (size_t i = 0; i < ids.size(); ++i)
        for (int64_t j = 0; j < c; ++j) out.data[i * c + j] = table->value.data[ids[i] * c + j];
    return make_op(std::move(out), {table}, [ids, c](Node& n_) {
        if (!n_.parents[0]->requires_grad) return;
        auto& g = n_.parents[0]->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int64_t j = 0; j < c; ++j) g[ids[i] * c + j] += n_.grad[i * c + j];
    });
}

// out[i] = in[perm[i]]; used for patchify/unpatchify rearrangements.
inline Var permute(const Var& a, const std::vector<int64_t>& perm, std::vector<int64_t> out_shape) {
    if (static_cast<int64_t>(perm.size()) != Tensor::numel_of(out_shape))
        throw std::invalid_argument("permute: index count does not match output shape");
    Tensor out(std::move(out_shape));
    for (size_t i = 0; i < perm.size(); ++i) out[i] = a->value[perm[i]];
    return make_op(std::move(out), {a}, [perm](Node& n_) {
        if (!n_.parents[0]->requires_grad) return;
        auto& g = n_.parents[0]->ensure_grad();
        for (size_t i = 0; i < perm.size(); ++i) g[perm[i]] += n_.grad[i];
    });
}

inline Var mean_all(const Var& a) {
    double m = 0.0;
    for (double v : a->value.data) m += v;
    int64_t n = a->value.numel();
    m /= static_cast<double>(n);
    return make_op(Tensor::scalar(m), {a}, [n](Node& n_) {
        if (!n_.parents[0]->requires_grad) return;
        auto& g = n_.parents[0]->ensure_grad();
        double s = n_.grad[0] / static_cast<double>(n);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s;
    });
}

inline Var mse(const Var& pred, const Var& target) {
    check_same_shape(pred->value, target->value, "mse");
    return mean_all(mul(sub(pred, target), sub(pred, target)));
}

inline Var reshape(const Var& a, std::vector<int64_t> s) {
    Tensor out = a->value.reshaped(std::move(s));
    return make_op(std::move(out), {a}, [](Node& n_) {
        if (!n_.parents[0]->requires_grad) return;
        auto& g = n_.parents[0]->ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n_.grad[i];
    });
}

// ---- backward sweep ----

inline void topo_sort(const Var& root, std::vector<Node*>& order) {
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

inline void backward(const Var& root) {
    if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    std::vector<Node*> order;
    topo_sort(root, order);
    // order is post-order (parents before children); walk it in reverse
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.shape == n->value.shape) n->backward_fn(*n);
    }
}

}  // namespace tide::ad
