#ifndef HOLOCODEC_VQ_HPP
#define HOLOCODEC_VQ_HPP

#include <cstdio>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "holocodec/common.hpp"

namespace holocodec {

// h x w grid of D-dimensional continuous vectors, cell-major (D contiguous).
struct LatentGrid {
    size_t h = 0, w = 0, d = 0;
    std::vector<double> data;

    LatentGrid() = default;
    LatentGrid(size_t h_, size_t w_, size_t d_) : h(h_), w(w_), d(d_), data(h_ * w_ * d_, 0.0) {}

    size_t cells() const { return h * w; }
    double* cell(size_t i) { return data.data() + i * d; }
    const double* cell(size_t i) const { return data.data() + i * d; }
    double& at(size_t y, size_t x, size_t k) { return data[(y * w + x) * d + k]; }
    double at(size_t y, size_t x, size_t k) const { return data[(y * w + x) * d + k]; }
};

// h x w grid of codevector indices.
struct IndexGrid {
    size_t h = 0, w = 0;
    std::vector<uint32_t> data;

    IndexGrid() = default;
    IndexGrid(size_t h_, size_t w_) : h(h_), w(w_), data(h_ * w_, 0) {}

    size_t cells() const { return h * w; }
    bool operator==(const IndexGrid& o) const { return h == o.h && w == o.w && data == o.data; }
};

// K x D codevector matrix with the EMA clustering state.
struct Codebook {
    size_t k = 0, d = 0;
    std::vector<double> vectors;     // K x D row-major
    std::vector<double> ema_counts;  // K
    std::vector<double> ema_sums;    // K x D
    double decay = 0.95;
    double laplace_eps = 1e-5;

    Codebook() = default;
    Codebook(size_t k_, size_t d_, double decay_ = 0.95)
        : k(k_), d(d_), vectors(k_ * d_, 0.0), ema_counts(k_, 0.0), ema_sums(k_ * d_, 0.0), decay(decay_) {
        if (k == 0 || d == 0) throw ConfigError("codebook needs K >= 1 and D >= 1");
        if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
    }

    double* row(size_t i) { return vectors.data() + i * d; }
    const double* row(size_t i) const { return vectors.data() + i * d; }
};

// Nearest codevector per cell (Euclidean), ties broken by lowest index.
inline std::pair<IndexGrid, LatentGrid> quantize(const LatentGrid& latents, const Codebook& book) {
    if (latents.d != book.d) throw ShapeError("quantize: latent dim != codebook dim");
    IndexGrid idx(latents.h, latents.w);
    LatentGrid q(latents.h, latents.w, latents.d);
    const size_t n = latents.cells();
    for (size_t i = 0; i < n; ++i) {
        const double* z = latents.cell(i);
        double best = std::numeric_limits<double>::infinity();
        size_t best_j = 0;
        for (size_t j = 0; j < book.k; ++j) {
            const double* e = book.row(j);
            double dist = 0;
            for (size_t c = 0; c < book.d; ++c) {
                double t = z[c] - e[c];
                dist += t * t;
                if (dist >= best) break;  // partial-distance cutoff
            }
            if (dist < best) {
                best = dist;
                best_j = j;
            }
        }
        idx.data[i] = static_cast<uint32_t>(best_j);
        std::copy(book.row(best_j), book.row(best_j) + book.d, q.cell(i));
    }
    return {std::move(idx), std::move(q)};
}

// One EMA clustering step. Accumulators always decay; a codevector is
// refreshed only when it received assignments, so unassigned rows keep their
// value exactly.
inline void ema_update(Codebook& book, const LatentGrid& latents, const IndexGrid& indices) {
    if (latents.d != book.d) throw ShapeError("ema_update: latent dim != codebook dim");
    if (indices.cells() != latents.cells()) throw ShapeError("ema_update: index grid size mismatch");

    std::vector<double> n(book.k, 0.0);
    std::vector<double> sum(book.k * book.d, 0.0);
    for (size_t i = 0; i < latents.cells(); ++i) {
        uint32_t j = indices.data[i];
        if (j >= book.k) throw CorruptStreamError("ema_update: index out of range");
        n[j] += 1.0;
        const double* z = latents.cell(i);
        for (size_t c = 0; c < book.d; ++c) sum[j * book.d + c] += z[c];
    }
    const double g = book.decay;
    for (size_t j = 0; j < book.k; ++j) {
        book.ema_counts[j] = g * book.ema_counts[j] + (1.0 - g) * n[j];
        for (size_t c = 0; c < book.d; ++c)
            book.ema_sums[j * book.d + c] = g * book.ema_sums[j * book.d + c] + (1.0 - g) * sum[j * book.d + c];
        if (n[j] > 0) {
            double denom = book.ema_counts[j] + book.laplace_eps;
            for (size_t c = 0; c < book.d; ++c) book.vectors[j * book.d + c] = book.ema_sums[j * book.d + c] / denom;
        }
    }
}

// Eq.-4 style losses: per-cell squared L2, averaged over cells. With EMA
// updates active the codebook term is monitored only.
inline std::pair<double, double> vq_losses(const LatentGrid& encoder_out, const LatentGrid& quantized, double beta) {
    if (encoder_out.h != quantized.h || encoder_out.w != quantized.w || encoder_out.d != quantized.d)
        throw ShapeError("vq_losses: shape mismatch");
    double s = 0;
    for (size_t i = 0; i < encoder_out.data.size(); ++i) {
        double t = encoder_out.data[i] - quantized.data[i];
        s += t * t;
    }
    double mean = encoder_out.cells() ? s / static_cast<double>(encoder_out.cells()) : 0.0;
    return {mean, beta * mean};
}

// Fraction of codevectors selected at least once across the given streams.
inline double utilization(const std::vector<IndexGrid>& streams, size_t k) {
    if (k == 0) throw ConfigError("utilization: K must be positive");
    std::set<uint32_t> seen;
    for (const auto& g : streams)
        for (uint32_t i : g.data) {
            if (i >= k) throw CorruptStreamError("utilization: index out of range");
            seen.insert(i);
        }
    return static_cast<double>(seen.size()) / static_cast<double>(k);
}

// --- codebook file format ---
// magic "RVQC", version u8, K u32, D u16, channel id u8,
// K*D little-endian f32, crc32 of the float payload.

inline std::vector<uint8_t> serialize_codebook(const Codebook& book, uint8_t channel_id) {
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), {'R', 'V', 'Q', 'C'});
    put_u8(buf, 1);
    put_u32(buf, static_cast<uint32_t>(book.k));
    put_u16(buf, static_cast<uint16_t>(book.d));
    put_u8(buf, channel_id);
    size_t payload_start = buf.size();
    for (double x : book.vectors) put_f32(buf, static_cast<float>(x));
    put_u32(buf, crc32_of(buf.data() + payload_start, buf.size() - payload_start));
    return buf;
}

inline Codebook parse_codebook(const std::vector<uint8_t>& buf, uint8_t* channel_id = nullptr) {
    if (buf.size() < 12 || std::memcmp(buf.data(), "RVQC", 4) != 0)
        throw CorruptStreamError("not a codebook file");
    ByteReader r(buf.data() + 4, buf.size() - 4);
    uint8_t version = r.u8();
    if (version != 1) throw CorruptStreamError("unsupported codebook version " + std::to_string(version));
    uint32_t k = r.u32();
    uint16_t d = r.u16();
    uint8_t ch = r.u8();
    if (channel_id) *channel_id = ch;
    if (k == 0 || d == 0) throw CorruptStreamError("codebook with empty geometry");
    size_t payload_bytes = static_cast<size_t>(k) * d * 4;
    if (r.remaining() != payload_bytes + 4) throw CorruptStreamError("codebook size mismatch");
    size_t payload_off = 4 + r.pos();
    Codebook book(k, d);
    for (double& x : book.vectors) x = r.f32();
    uint32_t want = r.u32();
    uint32_t got = crc32_of(buf.data() + payload_off, payload_bytes);
    if (want != got) throw CorruptStreamError("codebook checksum mismatch");
    return book;
}

inline void save_codebook(const std::string& path, const Codebook& book, uint8_t channel_id) {
    auto buf = serialize_codebook(book, channel_id);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write " + path);
    size_t n = std::fwrite(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (n != buf.size()) throw IoError("short write to " + path);
}

inline Codebook load_codebook(const std::string& path, uint8_t* channel_id = nullptr) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> buf(sz > 0 ? static_cast<size_t>(sz) : 0);
    size_t n = std::fread(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (n != buf.size()) throw IoError("short read from " + path);
    return parse_codebook(buf, channel_id);
}

}  // namespace holocodec

#endif
