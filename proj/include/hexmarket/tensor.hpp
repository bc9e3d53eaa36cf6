#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "hexmarket/common.hpp"

namespace hexmarket {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), v(numel_of(shape), 0.0) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != numel_of(shape)) throw ShapeError("tensor data length does not match shape");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<std::size_t>());
    }

    std::size_t numel() const { return v.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& at(std::size_t i) { return v[i]; }
    double at(std::size_t i) const { return v[i]; }

    // 3-D accessors for (channel, row, col) grids.
    double& at3(std::size_t c, std::size_t r, std::size_t k) { return v[(c * shape[1] + r) * shape[2] + k]; }
    double at3(std::size_t c, std::size_t r, std::size_t k) const { return v[(c * shape[1] + r) * shape[2] + k]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape == b.shape && a.v == b.v; }
};

inline double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (double x : t.v) s += x * x;
    return std::sqrt(s);
}

}  // namespace hexmarket
