#ifndef HOLOCODEC_AUTOGRAD_HPP
#define HOLOCODEC_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "holocodec/tensor.hpp"
#include "holocodec/vq.hpp"

namespace holocodec::ag {

// Reverse-mode tape. Interior nodes are rebuilt every step; parameter leaves
// persist and accumulate gradients until the optimizer clears them.
struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> back;

    void ensure_grad() {
        if (grad.shape != val.shape) grad = Tensor(val.shape);
    }
};

using Var = std::shared_ptr<Node>;

inline Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return n;
}

inline Var param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->needs_grad = true;
    n->ensure_grad();
    return n;
}

inline Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) n->needs_grad = n->needs_grad || p->needs_grad;
    if (n->needs_grad) n->back = std::move(back);
    return n;
}

inline void accum(const Var& p, const Tensor& g) {
    if (!p->needs_grad) return;
    p->ensure_grad();
    p->grad += g;
}

inline void backward(const Var& root) {
    if (root->val.size() != 1) throw ShapeError("backward: root must be scalar");
    // iterative topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (!n->needs_grad) {
            stack.pop_back();
            continue;
        }
        if (i < n->parents.size()) {
            Node* p = n->parents[i].get();
            ++i;
            if (p->needs_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->ensure_grad();
    root->grad.data.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->back) (*it)->back(**it);
}

// --- elementwise ---

inline Var add(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw ShapeError("add: shape mismatch");
    Tensor out = a->val;
    out += b->val;
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad);
        accum(b, n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw ShapeError("sub: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b->val[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad);
        if (b->needs_grad) {
            Tensor g = n.grad;
            for (double& x : g.data) x = -x;
            accum(b, g);
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw ShapeError("mul: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b->val[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) {
            Tensor g = n.grad;
            for (size_t i = 0; i < g.size(); ++i) g[i] *= b->val[i];
            accum(a, g);
        }
        if (b->needs_grad) {
            Tensor g = n.grad;
            for (size_t i = 0; i < g.size(); ++i) g[i] *= a->val[i];
            accum(b, g);
        }
    });
}

inline Var divide(const Var& a, const Var& b) {
    if (!a->val.same_shape(b->val)) throw ShapeError("divide: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.size(); ++i) out[i] /= b->val[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) {
            Tensor g = n.grad;
            for (size_t i = 0; i < g.size(); ++i) g[i] /= b->val[i];
            accum(a, g);
        }
        if (b->needs_grad) {
            Tensor g = n.grad;
            for (size_t i = 0; i < g.size(); ++i) g[i] *= -a->val[i] / (b->val[i] * b->val[i]);
            accum(b, g);
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a->val;
    for (double& x : out.data) x *= s;
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        Tensor g = n.grad;
        for (double& x : g.data) x *= s;
        accum(a, g);
    });
}

inline Var add_scalar(const Var& a, double s) {
    Tensor out = a->val;
    for (double& x : out.data) x += s;
    return make_node(std::move(out), {a}, [a](Node& n) { accum(a, n.grad); });
}

inline Var relu(const Var& a) {
    Tensor out = a->val;
    for (double& x : out.data) x = x > 0 ? x : 0.0;
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor g = n.grad;
        for (size_t i = 0; i < g.size(); ++i)
            if (a->val[i] <= 0) g[i] = 0;
        accum(a, g);
    });
}

inline Var tanh_op(const Var& a) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::tanh(x);
    return make_node(std::move(out), {a}, [a](Node& nd) {
        Tensor g = nd.grad;
        for (size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - nd.val[i] * nd.val[i];
        accum(a, g);
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = a->val;
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    return make_node(std::move(out), {a}, [a](Node& nd) {
        Tensor g = nd.grad;
        for (size_t i = 0; i < g.size(); ++i) g[i] *= nd.val[i] * (1.0 - nd.val[i]);
        accum(a, g);
    });
}

// x^p with x floored at `floor` (subgradient zero below the floor).
inline Var pow_floored(const Var& a, double p, double floor) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::pow(std::max(x, floor), p);
    return make_node(std::move(out), {a}, [a, p, floor](Node& n) {
        Tensor g = n.grad;
        for (size_t i = 0; i < g.size(); ++i) {
            double x = a->val[i];
            g[i] = x > floor ? g[i] * p * std::pow(x, p - 1.0) : 0.0;
        }
        accum(a, g);
    });
}

// --- reductions ---

inline Var sum(const Var& a) {
    double s = 0;
    for (double x : a->val.data) s += x;
    Tensor out({1});
    out[0] = s;
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor g(a->val.shape, n.grad[0]);
        accum(a, g);
    });
}

inline Var mean(const Var& a) {
    size_t m = a->val.size();
    double s = 0;
    for (double x : a->val.data) s += x;
    Tensor out({1});
    out[0] = s / static_cast<double>(m);
    return make_node(std::move(out), {a}, [a, m](Node& n) {
        Tensor g(a->val.shape, n.grad[0] / static_cast<double>(m));
        accum(a, g);
    });
}

inline Var mse(const Var& a, const Var& b) {
    auto d = sub(a, b);
    return mean(mul(d, d));
}

// --- structure ---

inline Var concat_channels(const Var& a, const Var& b) {
    if (a->val.shape.size() != 3 || b->val.shape.size() != 3 || a->val.shape[1] != b->val.shape[1] ||
        a->val.shape[2] != b->val.shape[2])
        throw ShapeError("concat_channels: incompatible shapes");
    size_t ca = a->val.shape[0], cb = b->val.shape[0];
    Tensor out({ca + cb, a->val.shape[1], a->val.shape[2]});
    std::copy(a->val.data.begin(), a->val.data.end(), out.data.begin());
    std::copy(b->val.data.begin(), b->val.data.end(), out.data.begin() + static_cast<long>(a->val.size()));
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->needs_grad) {
            Tensor g(a->val.shape);
            std::copy(n.grad.data.begin(), n.grad.data.begin() + static_cast<long>(g.size()), g.data.begin());
            accum(a, g);
        }
        if (b->needs_grad) {
            Tensor g(b->val.shape);
            std::copy(n.grad.data.begin() + static_cast<long>(a->val.size()), n.grad.data.end(), g.data.begin());
            accum(b, g);
        }
    });
}

inline Var slice1d(const Var& a, size_t start, size_t len) {
    if (a->val.shape.size() != 1 || start + len > a->val.size()) throw ShapeError("slice1d: out of range");
    Tensor out({len});
    std::copy(a->val.data.begin() + static_cast<long>(start), a->val.data.begin() + static_cast<long>(start + len),
              out.data.begin());
    return make_node(std::move(out), {a}, [a, start, len](Node& n) {
        Tensor g(a->val.shape);
        for (size_t i = 0; i < len; ++i) g[start + i] = n.grad[i];
        accum(a, g);
    });
}

inline Var reshape(const Var& a, std::vector<size_t> shape) {
    if (Tensor::count(shape) != a->val.size()) throw ShapeError("reshape: element count mismatch");
    Tensor out(shape);
    out.data = a->val.data;
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor g(a->val.shape);
        g.data = n.grad.data;
        accum(a, g);
    });
}

// Stacks n same-length vectors into an [n, D] matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const size_t d = rows[0]->val.size();
    Tensor out({rows.size(), d});
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i]->val.shape.size() != 1 || rows[i]->val.size() != d)
            throw ShapeError("stack_rows: inconsistent row shapes");
        std::copy(rows[i]->val.data.begin(), rows[i]->val.data.end(), out.data.begin() + static_cast<long>(i * d));
    }
    std::vector<Var> parents = rows;
    return make_node(std::move(out), std::move(parents), [rows, d](Node& n) {
        for (size_t i = 0; i < rows.size(); ++i) {
            if (!rows[i]->needs_grad) continue;
            Tensor g({d});
            std::copy(n.grad.data.begin() + static_cast<long>(i * d),
                      n.grad.data.begin() + static_cast<long>((i + 1) * d), g.data.begin());
            accum(rows[i], g);
        }
    });
}

// Centered crop on the spatial axes of [C,H,W].
inline Var crop_center3(const Var& a, size_t h, size_t w) {
    const size_t C = a->val.shape[0], H = a->val.shape[1], W = a->val.shape[2];
    if (h > H || w > W) throw ShapeError("crop_center3: window larger than input");
    const size_t oy = (H - h) / 2, ox = (W - w) / 2;
    Tensor out({C, h, w});
    for (size_t c = 0; c < C; ++c)
        for (size_t y = 0; y < h; ++y)
            for (size_t x = 0; x < w; ++x) out.at3(c, y, x) = a->val.at3(c, y + oy, x + ox);
    return make_node(std::move(out), {a}, [a, h, w, oy, ox](Node& n) {
        Tensor g(a->val.shape);
        const size_t C = g.shape[0];
        for (size_t c = 0; c < C; ++c)
            for (size_t y = 0; y < h; ++y)
                for (size_t x = 0; x < w; ++x) g.at3(c, y + oy, x + ox) = n.grad.at3(c, y, x);
        accum(a, g);
    });
}

// 2x2 average pooling, stride 2, floor semantics.
inline Var avg_pool2(const Var& a) {
    const size_t C = a->val.shape[0], H = a->val.shape[1], W = a->val.shape[2];
    const size_t OH = H / 2, OW = W / 2;
    Tensor out({C, OH, OW});
    for (size_t c = 0; c < C; ++c)
        for (size_t y = 0; y < OH; ++y)
            for (size_t x = 0; x < OW; ++x)
                out.at3(c, y, x) = 0.25 * (a->val.at3(c, 2 * y, 2 * x) + a->val.at3(c, 2 * y, 2 * x + 1) +
                                           a->val.at3(c, 2 * y + 1, 2 * x) + a->val.at3(c, 2 * y + 1, 2 * x + 1));
    return make_node(std::move(out), {a}, [a, C, OH, OW](Node& n) {
        Tensor g(a->val.shape);
        for (size_t c = 0; c < C; ++c)
            for (size_t y = 0; y < OH; ++y)
                for (size_t x = 0; x < OW; ++x) {
                    double v = 0.25 * n.grad.at3(c, y, x);
                    g.at3(c, 2 * y, 2 * x) += v;
                    g.at3(c, 2 * y, 2 * x + 1) += v;
                    g.at3(c, 2 * y + 1, 2 * x) += v;
                    g.at3(c, 2 * y + 1, 2 * x + 1) += v;
                }
        accum(a, g);
    });
}

// --- linear algebra ---

// W[m,n] x[n] + b[m]; b may be null.
inline Var affine(const Var& w, const Var& x, const Var& b) {
    const size_t m = w->val.shape[0], k = w->val.shape[1];
    if (x->val.shape.size() != 1 || x->val.size() != k) throw ShapeError("affine: dimension mismatch");
    Tensor out({m});
    for (size_t r = 0; r < m; ++r) {
        double acc = b ? b->val[r] : 0.0;
        for (size_t c = 0; c < k; ++c) acc += w->val.at2(r, c) * x->val[c];
        out[r] = acc;
    }
    std::vector<Var> parents{w, x};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [w, x, b, m, k](Node& n) {
        if (w->needs_grad) {
            Tensor g(w->val.shape);
            for (size_t r = 0; r < m; ++r)
                for (size_t c = 0; c < k; ++c) g.at2(r, c) = n.grad[r] * x->val[c];
            accum(w, g);
        }
        if (x->needs_grad) {
            Tensor g(x->val.shape);
            for (size_t c = 0; c < k; ++c) {
                double acc = 0;
                for (size_t r = 0; r < m; ++r) acc += w->val.at2(r, c) * n.grad[r];
                g[c] = acc;
            }
            accum(x, g);
        }
        if (b && b->needs_grad) accum(b, n.grad);
    });
}

// --- convolutions ---

inline Var conv2d(const Var& x, const Var& w, const Var& b, size_t stride, size_t pad) {
    Tensor out = nn::conv2d_fwd(x->val, w->val, b ? b->val : Tensor{}, stride, pad);
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, stride, pad](Node& n) {
        if (x->needs_grad)
            accum(x, nn::conv2d_bwd_input(n.grad, w->val, stride, pad, x->val.shape[0], x->val.shape[1],
                                          x->val.shape[2]));
        if (w->needs_grad)
            accum(w, nn::conv2d_bwd_weight(n.grad, x->val, stride, pad, w->val.shape[0], w->val.shape[1],
                                           w->val.shape[2], w->val.shape[3]));
        if (b && b->needs_grad) {
            Tensor g(b->val.shape);
            const size_t F = n.grad.shape[0], area = n.grad.shape[1] * n.grad.shape[2];
            for (size_t f = 0; f < F; ++f) {
                double acc = 0;
                for (size_t i = 0; i < area; ++i) acc += n.grad.data[f * area + i];
                g[f] = acc;
            }
            accum(b, g);
        }
    });
}

inline Var conv_transpose2d(const Var& x, const Var& w, const Var& b, size_t stride, size_t pad) {
    Tensor out = nn::convT2d_fwd(x->val, w->val, b ? b->val : Tensor{}, stride, pad);
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, stride, pad](Node& n) {
        if (x->needs_grad)
            accum(x, nn::convT2d_bwd_input(n.grad, w->val, stride, pad, x->val.shape[0], x->val.shape[1],
                                           x->val.shape[2]));
        if (w->needs_grad)
            accum(w, nn::convT2d_bwd_weight(n.grad, x->val, stride, pad, w->val.shape[0], w->val.shape[1],
                                            w->val.shape[2], w->val.shape[3]));
        if (b && b->needs_grad) {
            Tensor g(b->val.shape);
            const size_t F = n.grad.shape[0], area = n.grad.shape[1] * n.grad.shape[2];
            for (size_t f = 0; f < F; ++f) {
                double acc = 0;
                for (size_t i = 0; i < area; ++i) acc += n.grad.data[f * area + i];
                g[f] = acc;
            }
            accum(b, g);
        }
    });
}

namespace detail {

struct Bilinear {
    // corner indices and weights for sampling at (u, v); out-of-range taps are zero
    long y0, x0;
    double fy, fx;
};

inline double bilinear_sample(const Tensor& x, size_t c, double u, double v) {
    const long H = static_cast<long>(x.shape[1]), W = static_cast<long>(x.shape[2]);
    long y0 = static_cast<long>(std::floor(u)), x0 = static_cast<long>(std::floor(v));
    double fy = u - static_cast<double>(y0), fx = v - static_cast<double>(x0);
    auto tap = [&](long yy, long xx) {
        return (yy < 0 || yy >= H || xx < 0 || xx >= W) ? 0.0 : x.at3(c, static_cast<size_t>(yy), static_cast<size_t>(xx));
    };
    return (1 - fy) * (1 - fx) * tap(y0, x0) + (1 - fy) * fx * tap(y0, x0 + 1) + fy * (1 - fx) * tap(y0 + 1, x0) +
           fy * fx * tap(y0 + 1, x0 + 1);
}

}  // namespace detail

// Deformable convolution: each kernel tap (i, j) samples the input at its
// regular position displaced by a learned per-output-pixel offset.
// off is [2*kh*kw, OH, OW] with (dy, dx) pairs per tap. Backward is serial;
// the op is an architecture flag, not the training hot path.
inline Var deform_conv2d(const Var& x, const Var& w, const Var& b, const Var& off, size_t stride, size_t pad) {
    const size_t C = x->val.shape[0], H = x->val.shape[1], W = x->val.shape[2];
    const size_t F = w->val.shape[0], kh = w->val.shape[2], kw = w->val.shape[3];
    if (w->val.shape[1] != C) throw ShapeError("deform_conv2d: channel mismatch");
    const size_t OH = nn::conv_out(H, kh, stride, pad), OW = nn::conv_out(W, kw, stride, pad);
    if (off->val.shape != std::vector<size_t>{2 * kh * kw, OH, OW})
        throw ShapeError("deform_conv2d: offset map shape mismatch");

    const long lp = static_cast<long>(pad);
    Tensor out({F, OH, OW});
    for (size_t f = 0; f < F; ++f)
        for (size_t oy = 0; oy < OH; ++oy)
            for (size_t ox = 0; ox < OW; ++ox) {
                double acc = b ? b->val[f] : 0.0;
                for (size_t i = 0; i < kh; ++i)
                    for (size_t j = 0; j < kw; ++j) {
                        size_t tap = i * kw + j;
                        double u = static_cast<double>(static_cast<long>(oy * stride + i) - lp) +
                                   off->val.at3(2 * tap, oy, ox);
                        double v = static_cast<double>(static_cast<long>(ox * stride + j) - lp) +
                                   off->val.at3(2 * tap + 1, oy, ox);
                        for (size_t c = 0; c < C; ++c)
                            acc += w->val.data[((f * C + c) * kh + i) * kw + j] * detail::bilinear_sample(x->val, c, u, v);
                    }
                out.at3(f, oy, ox) = acc;
            }

    std::vector<Var> parents{x, w, off};
    if (b) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [x, w, b, off, stride, pad, C, H, W, F, kh, kw, OH, OW,
                                                          lp](Node& n) {
        Tensor gx(x->val.shape), gw(w->val.shape), goff(off->val.shape);
        Tensor gb(b ? b->val.shape : std::vector<size_t>{1});
        const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
        for (size_t f = 0; f < F; ++f)
            for (size_t oy = 0; oy < OH; ++oy)
                for (size_t ox = 0; ox < OW; ++ox) {
                    double g = n.grad.at3(f, oy, ox);
                    if (b) gb[f] += g;
                    for (size_t i = 0; i < kh; ++i)
                        for (size_t j = 0; j < kw; ++j) {
                            size_t tap = i * kw + j;
                            double u = static_cast<double>(static_cast<long>(oy * stride + i) - lp) +
                                       off->val.at3(2 * tap, oy, ox);
                            double v = static_cast<double>(static_cast<long>(ox * stride + j) - lp) +
                                       off->val.at3(2 * tap + 1, oy, ox);
                            long y0 = static_cast<long>(std::floor(u)), x0 = static_cast<long>(std::floor(v));
                            double fy = u - y0, fx = v - x0;
                            double du_acc = 0, dv_acc = 0;
                            for (size_t c = 0; c < C; ++c) {
                                double wv = w->val.data[((f * C + c) * kh + i) * kw + j];
                                double corners[2][2];
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        long yy = y0 + dy, xx = x0 + dx;
                                        corners[dy][dx] = (yy < 0 || yy >= Hl || xx < 0 || xx >= Wl)
                                                              ? 0.0
                                                              : x->val.at3(c, yy, xx);
                                    }
                                double sample = (1 - fy) * (1 - fx) * corners[0][0] + (1 - fy) * fx * corners[0][1] +
                                                fy * (1 - fx) * corners[1][0] + fy * fx * corners[1][1];
                                gw.data[((f * C + c) * kh + i) * kw + j] += g * sample;
                                du_acc += wv * ((1 - fx) * (corners[1][0] - corners[0][0]) +
                                                fx * (corners[1][1] - corners[0][1]));
                                dv_acc += wv * ((1 - fy) * (corners[0][1] - corners[0][0]) +
                                                fy * (corners[1][1] - corners[1][0]));
                                double wq[2][2] = {{(1 - fy) * (1 - fx), (1 - fy) * fx},
                                                   {fy * (1 - fx), fy * fx}};
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        long yy = y0 + dy, xx = x0 + dx;
                                        if (yy >= 0 && yy < Hl && xx >= 0 && xx < Wl)
                                            gx.at3(c, yy, xx) += g * wv * wq[dy][dx];
                                    }
                            }
                            goff.at3(2 * tap, oy, ox) += g * du_acc;
                            goff.at3(2 * tap + 1, oy, ox) += g * dv_acc;
                        }
                }
        accum(x, gx);
        accum(w, gw);
        accum(off, goff);
        if (b) accum(b, gb);
    });
}

// --- quantization ---

// Straight-through estimator: forward takes the quantized values, backward
// passes gradients through to the encoder output unchanged.
inline Var straight_through(const Var& encoder_out, const Var& quantized) {
    if (!encoder_out->val.same_shape(quantized->val)) throw ShapeError("straight_through: shape mismatch");
    Tensor out = quantized->val;
    return make_node(std::move(out), {encoder_out, quantized},
                     [encoder_out](Node& n) { accum(encoder_out, n.grad); });
}

// Quantized lookup with the straight-through path to the encoder. The value
// is book[indices] laid out as [D,h,w]; gradients reach the encoder output
// as identity and, when grad_to_book is set, the selected codebook rows.
inline Var ste_quantize(const Var& z, const Var& book, const IndexGrid& indices, bool grad_to_book) {
    const size_t D = z->val.shape[0], h = z->val.shape[1], w = z->val.shape[2];
    if (book->val.shape.size() != 2 || book->val.shape[1] != D) throw ShapeError("ste_quantize: codebook dim mismatch");
    if (indices.h != h || indices.w != w) throw ShapeError("ste_quantize: index grid mismatch");
    Tensor out({D, h, w});
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) {
            uint32_t j = indices.data[y * w + x];
            for (size_t c = 0; c < D; ++c) out.at3(c, y, x) = book->val.at2(j, c);
        }
    IndexGrid idx = indices;
    return make_node(std::move(out), {z, book}, [z, book, idx, grad_to_book, D, h, w](Node& n) {
        accum(z, n.grad);
        if (grad_to_book && book->needs_grad) {
            Tensor g(book->val.shape);
            for (size_t y = 0; y < h; ++y)
                for (size_t x = 0; x < w; ++x) {
                    uint32_t j = idx.data[y * w + x];
                    for (size_t c = 0; c < D; ++c) g.at2(j, c) += n.grad.at3(c, y, x);
                }
            accum(book, g);
        }
    });
}

// Rows of a [K,D] matrix gathered into [n,D]; gradient scatters back.
inline Var gather_rows(const Var& book, const std::vector<uint32_t>& rows) {
    const size_t D = book->val.shape[1];
    Tensor out({rows.size(), D});
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t c = 0; c < D; ++c) out.at2(i, c) = book->val.at2(rows[i], c);
    auto rows_copy = rows;
    return make_node(std::move(out), {book}, [book, rows_copy, D](Node& n) {
        Tensor g(book->val.shape);
        for (size_t i = 0; i < rows_copy.size(); ++i)
            for (size_t c = 0; c < D; ++c) g.at2(rows_copy[i], c) += n.grad.at2(i, c);
        accum(book, g);
    });
}

}  // namespace holocodec::ag

#endif
