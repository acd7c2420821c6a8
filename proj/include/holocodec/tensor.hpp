#ifndef HOLOCODEC_TENSOR_HPP
#define HOLOCODEC_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "holocodec/common.hpp"

namespace holocodec {

// Dense double tensor. Rank is dynamic; layout is row-major with the last
// axis contiguous. 3-D activations use [C, H, W].
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(count(shape), fill);
    }

    static size_t count(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return n;
    }

    size_t size() const { return data.size(); }
    size_t dim(size_t i) const { return shape.at(i); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    // [C,H,W] accessor
    double& at3(size_t c, size_t y, size_t x) { return data[(c * shape[1] + y) * shape[2] + x]; }
    double at3(size_t c, size_t y, size_t x) const { return data[(c * shape[1] + y) * shape[2] + x]; }
    // [R,C] accessor
    double& at2(size_t r, size_t c) { return data[r * shape[1] + c]; }
    double at2(size_t r, size_t c) const { return data[r * shape[1] + c]; }

    Tensor& operator+=(const Tensor& o) {
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }

    double abs_max() const {
        double m = 0;
        for (double x : data) m = std::max(m, std::abs(x));
        return m;
    }
};

inline Tensor uniform_init(std::vector<size_t> shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& x : t.data) x = u(rng);
    return t;
}

namespace nn {

// All convolution kernels below are written as gathers: every output element
// is produced by exactly one loop iteration, so OpenMP scheduling cannot
// change the result.

inline size_t conv_out(size_t n, size_t k, size_t stride, size_t pad) {
    return (n + 2 * pad - k) / stride + 1;
}

// x[C,H,W], w[F,C,kh,kw], bias[F] (may be empty) -> y[F,OH,OW]
inline Tensor conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& bias, size_t stride, size_t pad) {
    const size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    const size_t F = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[1] != C) throw ShapeError("conv2d: channel mismatch");
    const size_t OH = conv_out(H, kh, stride, pad), OW = conv_out(W, kw, stride, pad);
    Tensor y({F, OH, OW});
    const long lp = static_cast<long>(pad);
#pragma omp parallel for collapse(2) schedule(static) if (F * OH > 8)
    for (size_t f = 0; f < F; ++f) {
        for (size_t oy = 0; oy < OH; ++oy) {
            for (size_t ox = 0; ox < OW; ++ox) {
                double acc = bias.size() ? bias[f] : 0.0;
                for (size_t c = 0; c < C; ++c) {
                    for (size_t i = 0; i < kh; ++i) {
                        long iy = static_cast<long>(oy * stride + i) - lp;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (size_t j = 0; j < kw; ++j) {
                            long ix = static_cast<long>(ox * stride + j) - lp;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            acc += x.at3(c, iy, ix) * w.data[((f * C + c) * kh + i) * kw + j];
                        }
                    }
                }
                y.at3(f, oy, ox) = acc;
            }
        }
    }
    return y;
}

inline Tensor conv2d_bwd_input(const Tensor& gy, const Tensor& w, size_t stride, size_t pad, size_t C, size_t H,
                               size_t W) {
    const size_t F = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const size_t OH = gy.shape[1], OW = gy.shape[2];
    Tensor gx({C, H, W});
    const long lp = static_cast<long>(pad);
#pragma omp parallel for collapse(2) schedule(static) if (C * H > 8)
    for (size_t c = 0; c < C; ++c) {
        for (size_t iy = 0; iy < H; ++iy) {
            for (size_t ix = 0; ix < W; ++ix) {
                double acc = 0;
                for (size_t f = 0; f < F; ++f) {
                    for (size_t i = 0; i < kh; ++i) {
                        long num_y = static_cast<long>(iy) + lp - static_cast<long>(i);
                        if (num_y < 0 || num_y % static_cast<long>(stride)) continue;
                        size_t oy = static_cast<size_t>(num_y) / stride;
                        if (oy >= OH) continue;
                        for (size_t j = 0; j < kw; ++j) {
                            long num_x = static_cast<long>(ix) + lp - static_cast<long>(j);
                            if (num_x < 0 || num_x % static_cast<long>(stride)) continue;
                            size_t ox = static_cast<size_t>(num_x) / stride;
                            if (ox >= OW) continue;
                            acc += gy.at3(f, oy, ox) * w.data[((f * C + c) * kh + i) * kw + j];
                        }
                    }
                }
                gx.at3(c, iy, ix) = acc;
            }
        }
    }
    return gx;
}

inline Tensor conv2d_bwd_weight(const Tensor& gy, const Tensor& x, size_t stride, size_t pad, size_t F, size_t C,
                                size_t kh, size_t kw) {
    const size_t H = x.shape[1], W = x.shape[2];
    const size_t OH = gy.shape[1], OW = gy.shape[2];
    Tensor gw({F, C, kh, kw});
    const long lp = static_cast<long>(pad);
#pragma omp parallel for collapse(2) schedule(static) if (F * C > 4)
    for (size_t f = 0; f < F; ++f) {
        for (size_t c = 0; c < C; ++c) {
            for (size_t i = 0; i < kh; ++i) {
                for (size_t j = 0; j < kw; ++j) {
                    double acc = 0;
                    for (size_t oy = 0; oy < OH; ++oy) {
                        long iy = static_cast<long>(oy * stride + i) - lp;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (size_t ox = 0; ox < OW; ++ox) {
                            long ix = static_cast<long>(ox * stride + j) - lp;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            acc += gy.at3(f, oy, ox) * x.at3(c, iy, ix);
                        }
                    }
                    gw.data[((f * C + c) * kh + i) * kw + j] = acc;
                }
            }
        }
    }
    return gw;
}

inline size_t convT_out(size_t n, size_t k, size_t stride, size_t pad) { return (n - 1) * stride + k - 2 * pad; }

// x[C,H,W], w[C,F,kh,kw], bias[F] -> y[F,OH,OW] with OH = (H-1)*stride + kh - 2*pad
inline Tensor convT2d_fwd(const Tensor& x, const Tensor& w, const Tensor& bias, size_t stride, size_t pad) {
    const size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    const size_t F = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[0] != C) throw ShapeError("conv_transpose2d: channel mismatch");
    const size_t OH = convT_out(H, kh, stride, pad), OW = convT_out(W, kw, stride, pad);
    Tensor y({F, OH, OW});
    const long lp = static_cast<long>(pad);
#pragma omp parallel for collapse(2) schedule(static) if (F * OH > 8)
    for (size_t f = 0; f < F; ++f) {
        for (size_t oy = 0; oy < OH; ++oy) {
            for (size_t ox = 0; ox < OW; ++ox) {
                double acc = bias.size() ? bias[f] : 0.0;
                for (size_t c = 0; c < C; ++c) {
                    for (size_t i = 0; i < kh; ++i) {
                        long num_y = static_cast<long>(oy) + lp - static_cast<long>(i);
                        if (num_y < 0 || num_y % static_cast<long>(stride)) continue;
                        size_t iy = static_cast<size_t>(num_y) / stride;
                        if (iy >= H) continue;
                        for (size_t j = 0; j < kw; ++j) {
                            long num_x = static_cast<long>(ox) + lp - static_cast<long>(j);
                            if (num_x < 0 || num_x % static_cast<long>(stride)) continue;
                            size_t ix = static_cast<size_t>(num_x) / stride;
                            if (ix >= W) continue;
                            acc += x.at3(c, iy, ix) * w.data[((c * F + f) * kh + i) * kw + j];
                        }
                    }
                }
                y.at3(f, oy, ox) = acc;
            }
        }
    }
    return y;
}

inline Tensor convT2d_bwd_input(const Tensor& gy, const Tensor& w, size_t stride, size_t pad, size_t C, size_t H,
                                size_t W) {
    const size_t F = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    const size_t OH = gy.shape[1], OW = gy.shape[2];
    Tensor gx({C, H, W});
    const long lp = static_cast<long>(pad);
#pragma omp parallel for collapse(2) schedule(static) if (C * H > 8)
    for (size_t c = 0; c < C; ++c) {
        for (size_t iy = 0; iy < H; ++iy) {
            for (size_t ix = 0; ix < W; ++ix) {
                double acc = 0;
                for (size_t f = 0; f < F; ++f) {
                    for (size_t i = 0; i < kh; ++i) {
                        long oy = static_cast<long>(iy * stride + i) - lp;
                        if (oy < 0 || oy >= static_cast<long>(OH)) continue;
                        for (size_t j = 0; j < kw; ++j) {
                            long ox = static_cast<long>(ix * stride + j) - lp;
                            if (ox < 0 || ox >= static_cast<long>(OW)) continue;
                            acc += gy.at3(f, oy, ox) * w.data[((c * F + f) * kh + i) * kw + j];
                        }
                    }
                }
                gx.at3(c, iy, ix) = acc;
            }
        }
    }
    return gx;
}

inline Tensor convT2d_bwd_weight(const Tensor& gy, const Tensor& x, size_t stride, size_t pad, size_t C, size_t F,
                                 size_t kh, size_t kw) {
    const size_t H = x.shape[1], W = x.shape[2];
    const size_t OH = gy.shape[1], OW = gy.shape[2];
    Tensor gw({C, F, kh, kw});
    const long lp = static_cast<long>(pad);
#pragma omp parallel for collapse(2) schedule(static) if (C * F > 4)
    for (size_t c = 0; c < C; ++c) {
        for (size_t f = 0; f < F; ++f) {
            for (size_t i = 0; i < kh; ++i) {
                for (size_t j = 0; j < kw; ++j) {
                    double acc = 0;
                    for (size_t iy = 0; iy < H; ++iy) {
                        long oy = static_cast<long>(iy * stride + i) - lp;
                        if (oy < 0 || oy >= static_cast<long>(OH)) continue;
                        for (size_t ix = 0; ix < W; ++ix) {
                            long ox = static_cast<long>(ix * stride + j) - lp;
                            if (ox < 0 || ox >= static_cast<long>(OW)) continue;
                            acc += x.at3(c, iy, ix) * gy.at3(f, oy, ox);
                        }
                    }
                    gw.data[((c * F + f) * kh + i) * kw + j] = acc;
                }
            }
        }
    }
    return gw;
}

}  // namespace nn
}  // namespace holocodec

#endif
