#ifndef HOLOCODEC_ADAPTER_HPP
#define HOLOCODEC_ADAPTER_HPP

#include "holocodec/autograd.hpp"

namespace holocodec {

namespace ag {

// One LSTM step. Gate layout in the stacked weights: input, forget, cell, output.
struct LstmState {
    Var h, c;
};

inline LstmState lstm_cell(const Var& x, const LstmState& s, const Var& wx, const Var& wh, const Var& b,
                           size_t hidden) {
    Var gates = add(affine(wx, x, b), affine(wh, s.h, nullptr));
    Var i = sigmoid(slice1d(gates, 0, hidden));
    Var f = sigmoid(slice1d(gates, hidden, hidden));
    Var g = tanh_op(slice1d(gates, 2 * hidden, hidden));
    Var o = sigmoid(slice1d(gates, 3 * hidden, hidden));
    Var c = add(mul(f, s.c), mul(i, g));
    Var h = mul(o, tanh_op(c));
    return {h, c};
}

}  // namespace ag

// Sequence-to-sequence codebook resizer: an LSTM encoder summarizes the K
// source codevectors, an LSTM decoder emits one codevector per step for
// exactly K-tilde steps.
struct AdapterModel {
    size_t dim = 0;
    size_t hidden = 64;
    size_t k_min = 1;
    size_t k_max = 4096;

    ag::Var enc_wx, enc_wh, enc_b;
    ag::Var dec_wx, dec_wh, dec_b;
    ag::Var out_w, out_b;
    ag::Var start;  // learned first decoder input

    static AdapterModel init(size_t dim, size_t hidden, size_t k_min, size_t k_max, Rng& rng) {
        if (k_min < 1 || k_max < k_min) throw ConfigError("adapter size range invalid");
        AdapterModel m;
        m.dim = dim;
        m.hidden = hidden;
        m.k_min = k_min;
        m.k_max = k_max;
        double bx = 1.0 / std::sqrt(static_cast<double>(dim));
        double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
        m.enc_wx = ag::param(uniform_init({4 * hidden, dim}, bx, rng));
        m.enc_wh = ag::param(uniform_init({4 * hidden, hidden}, bh, rng));
        m.enc_b = ag::param(Tensor({4 * hidden}));
        m.dec_wx = ag::param(uniform_init({4 * hidden, dim}, bx, rng));
        m.dec_wh = ag::param(uniform_init({4 * hidden, hidden}, bh, rng));
        m.dec_b = ag::param(Tensor({4 * hidden}));
        m.out_w = ag::param(uniform_init({dim, hidden}, bh, rng));
        m.out_b = ag::param(Tensor({dim}));
        m.start = ag::param(uniform_init({dim}, bx, rng));
        return m;
    }

    std::vector<std::pair<std::string, ag::Var>> named_params(const std::string& prefix) const {
        return {{prefix + ".enc_wx", enc_wx}, {prefix + ".enc_wh", enc_wh}, {prefix + ".enc_b", enc_b},
                {prefix + ".dec_wx", dec_wx}, {prefix + ".dec_wh", dec_wh}, {prefix + ".dec_b", dec_b},
                {prefix + ".out_w", out_w},   {prefix + ".out_b", out_b},   {prefix + ".start", start}};
    }
};

namespace ag {

// Differentiable adaptation: reads the source rows in index order, decodes
// target_k rows autoregressively. `source` is a [K, D] Var (constant at
// inference, constant-but-frozen base codebook during stage 2).
inline Var adapt_op(const AdapterModel& m, const Var& source, size_t target_k) {
    const size_t k = source->val.shape[0];
    if (source->val.shape[1] != m.dim) throw ShapeError("adapt: codebook dim does not match adapter");
    if (target_k < m.k_min || target_k > m.k_max)
        throw RangeError("adapt: target size " + std::to_string(target_k) + " outside [" + std::to_string(m.k_min) +
                         ", " + std::to_string(m.k_max) + "]");

    Var flat = reshape(source, {k * m.dim});
    LstmState s{constant(Tensor({m.hidden})), constant(Tensor({m.hidden}))};
    for (size_t i = 0; i < k; ++i)
        s = lstm_cell(slice1d(flat, i * m.dim, m.dim), s, m.enc_wx, m.enc_wh, m.enc_b, m.hidden);

    Var x = m.start;
    std::vector<Var> rows;
    rows.reserve(target_k);
    for (size_t t = 0; t < target_k; ++t) {
        s = lstm_cell(x, s, m.dec_wx, m.dec_wh, m.dec_b, m.hidden);
        Var y = affine(m.out_w, s.h, m.out_b);
        rows.push_back(y);
        x = y;
    }
    return stack_rows(rows);
}

}  // namespace ag

// Generates a codebook of exactly target_k vectors from the source codebook.
// Deterministic given the adapter parameters; the source is untouched.
inline Codebook adapt(const Codebook& book, size_t target_k, const AdapterModel& model) {
    ag::Var src = ag::constant([&] {
        Tensor t({book.k, book.d});
        std::copy(book.vectors.begin(), book.vectors.end(), t.data.begin());
        return t;
    }());
    ag::Var out = ag::adapt_op(model, src, target_k);
    Codebook adapted(target_k, book.d, book.decay);
    adapted.laplace_eps = book.laplace_eps;
    adapted.vectors = out->val.data;
    for (double x : adapted.vectors)
        if (!std::isfinite(x)) throw NumericError("adapt produced a non-finite codevector");
    return adapted;
}

// Deterministic k-means reduction of a codebook; the oracle and fallback for
// the learned adapter. Seeded k-means++ initialization, fixed iteration cap,
// empty clusters keep their centroid. sse_trace, when given, receives the
// within-cluster SSE after each assignment step.
inline Codebook cluster_reduce(const Codebook& book, size_t target_k, uint64_t seed,
                               std::vector<double>* sse_trace = nullptr, size_t max_iters = 25) {
    if (target_k < 1 || target_k > book.k) throw RangeError("cluster_reduce: target size outside [1, K]");
    Codebook out(target_k, book.d, book.decay);
    out.laplace_eps = book.laplace_eps;
    if (target_k == book.k) {
        out.vectors = book.vectors;
        return out;
    }

    Rng rng(seed);
    const size_t k = book.k, d = book.d;
    auto dist2 = [&](const double* a, const double* b) {
        double s = 0;
        for (size_t c = 0; c < d; ++c) {
            double t = a[c] - b[c];
            s += t * t;
        }
        return s;
    };

    // k-means++ seeding
    std::vector<size_t> centers;
    std::uniform_int_distribution<size_t> first(0, k - 1);
    centers.push_back(first(rng));
    std::vector<double> d2(k);
    while (centers.size() < target_k) {
        double total = 0;
        for (size_t i = 0; i < k; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (size_t c : centers) best = std::min(best, dist2(book.row(i), book.row(c)));
            d2[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng), acc = 0;
            for (size_t i = 0; i < k; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = centers.size() % k;  // all points coincide
        }
        centers.push_back(pick);
    }
    for (size_t j = 0; j < target_k; ++j)
        std::copy(book.row(centers[j]), book.row(centers[j]) + d, out.row(j));

    std::vector<uint32_t> assign(k, 0);
    for (size_t iter = 0; iter < max_iters; ++iter) {
        double sse = 0;
        for (size_t i = 0; i < k; ++i) {
            double best = std::numeric_limits<double>::infinity();
            uint32_t bj = 0;
            for (size_t j = 0; j < target_k; ++j) {
                double t = dist2(book.row(i), out.row(j));
                if (t < best) {
                    best = t;
                    bj = static_cast<uint32_t>(j);
                }
            }
            assign[i] = bj;
            sse += best;
        }
        if (sse_trace) sse_trace->push_back(sse);

        std::vector<double> sum(target_k * d, 0.0);
        std::vector<size_t> n(target_k, 0);
        for (size_t i = 0; i < k; ++i) {
            ++n[assign[i]];
            for (size_t c = 0; c < d; ++c) sum[assign[i] * d + c] += book.row(i)[c];
        }
        bool moved = false;
        for (size_t j = 0; j < target_k; ++j) {
            if (n[j] == 0) continue;
            for (size_t c = 0; c < d; ++c) {
                double v = sum[j * d + c] / static_cast<double>(n[j]);
                moved = moved || v != out.row(j)[c];
                out.row(j)[c] = v;
            }
        }
        if (!moved) break;
    }
    return out;
}

}  // namespace holocodec

#endif
