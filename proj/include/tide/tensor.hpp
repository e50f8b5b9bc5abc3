#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tide {

// Dense row-major tensor of doubles. Everything in this project runs in
// double precision so analytic gradients can be checked against central
// finite differences at tight tolerances.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
    Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int64_t> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    // 2-D accessors; rows/cols treat a 1-D tensor as a single row.
    int64_t rows() const { return rank() >= 2 ? shape[0] : 1; }
    int64_t cols() const {
        if (rank() == 0) return 0;
        return rank() >= 2 ? numel() / shape[0] : shape[0];
    }
    double& at(int64_t i, int64_t j) { return data[i * cols() + j]; }
    double at(int64_t i, int64_t j) const { return data[i * cols() + j]; }
    double& operator[](int64_t i) { return data[i]; }
    double operator[](int64_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(std::vector<int64_t> s) const {
        if (numel_of(s) != numel()) throw std::invalid_argument("reshape: element count mismatch");
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_str(const Tensor& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace tide
