#ifndef HOLOCODEC_GRID_HPP
#define HOLOCODEC_GRID_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "holocodec/common.hpp"

namespace holocodec {

// Dense row-major H x W grid. The workhorse for fields, phase and amplitude maps.
template <typename T>
struct Grid {
    size_t h = 0, w = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(size_t h_, size_t w_, T fill = T{}) : h(h_), w(w_), v(h_ * w_, fill) {}

    T& at(size_t y, size_t x) { return v[y * w + x]; }
    const T& at(size_t y, size_t x) const { return v[y * w + x]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }

    bool operator==(const Grid& o) const { return h == o.h && w == o.w && v == o.v; }
};

using RGrid = Grid<double>;
using CGrid = Grid<std::complex<double>>;

template <typename T>
bool all_finite(const Grid<T>& g) {
    for (const T& x : g.v) {
        if constexpr (std::is_same_v<T, std::complex<double>>) {
            if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
        } else {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

// Embeds `g` centered inside an H x W grid of zeros.
template <typename T>
Grid<T> pad_center(const Grid<T>& g, size_t H, size_t W) {
    if (H < g.h || W < g.w) throw ShapeError("pad_center: target smaller than source");
    Grid<T> out(H, W);
    size_t oy = (H - g.h) / 2, ox = (W - g.w) / 2;
    for (size_t y = 0; y < g.h; ++y)
        std::copy(g.v.begin() + y * g.w, g.v.begin() + (y + 1) * g.w, out.v.begin() + (y + oy) * W + ox);
    return out;
}

// Extracts the centered h x w window.
template <typename T>
Grid<T> crop_center(const Grid<T>& g, size_t h, size_t w) {
    if (h > g.h || w > g.w) throw ShapeError("crop_center: window larger than source");
    Grid<T> out(h, w);
    size_t oy = (g.h - h) / 2, ox = (g.w - w) / 2;
    for (size_t y = 0; y < h; ++y)
        std::copy(g.v.begin() + (y + oy) * g.w + ox, g.v.begin() + (y + oy) * g.w + ox + w, out.v.begin() + y * w);
    return out;
}

// Adds `g` into the centered h x w window of an H x W zero grid (adjoint of crop_center).
template <typename T>
Grid<T> embed_center(const Grid<T>& g, size_t H, size_t W) {
    return pad_center(g, H, W);
}

inline double norm_l2(const CGrid& g) {
    double s = 0;
    for (const auto& z : g.v) s += std::norm(z);
    return std::sqrt(s);
}

inline double norm_l2(const RGrid& g) {
    double s = 0;
    for (double x : g.v) s += x * x;
    return std::sqrt(s);
}

}  // namespace holocodec

#endif
