#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace agrg {

// Dense row-major tensor of doubles. Most graph ops treat tensors as 2D
// (rows x cols); vectors are 1xN and scalars 1x1.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), fill);
    }

    static Tensor matrix(int rows, int cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor row(std::vector<double> v) {
        Tensor t;
        t.shape = {1, static_cast<int>(v.size())};
        t.data = std::move(v);
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.shape = {1, 1};
        t.data = {v};
        return t;
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int e : s) {
            if (e <= 0) throw std::invalid_argument("tensor extent must be positive");
            n *= e;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    // 2D accessors; a tensor of rank r is viewed as (prod of leading dims) x last dim.
    int rows() const {
        if (shape.empty()) return 0;
        int64_t r = 1;
        for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
        return static_cast<int>(r);
    }
    int cols() const { return shape.empty() ? 0 : shape.back(); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace agrg
