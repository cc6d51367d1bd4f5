#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace scarnav {

// Dense channel-major C x H x W tensor of doubles.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

    std::size_t idx(int ci, int y, int x) const { return (static_cast<std::size_t>(ci) * h + y) * w + x; }

    double& at(int ci, int y, int x) { return v[idx(ci, y, x)]; }
    double at(int ci, int y, int x) const { return v[idx(ci, y, x)]; }

    void zero() { v.assign(v.size(), 0.0); }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    void require_shape(int c_, int h_, int w_, const char* what) const {
        if (c != c_ || h != h_ || w != w_) throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
};

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("tensor add: shape mismatch");
    Tensor r = a;
    for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] += b.v[i];
    return r;
}

}  // namespace scarnav
