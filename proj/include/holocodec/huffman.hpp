#ifndef HOLOCODEC_HUFFMAN_HPP
#define HOLOCODEC_HUFFMAN_HPP

#include <algorithm>
#include <map>
#include <queue>

#include "holocodec/common.hpp"
#include "holocodec/vq.hpp"

namespace holocodec {

// Canonical Huffman table: present symbols with code lengths; codes are a
// pure function of the (length, symbol)-sorted list, so independently built
// encoders and decoders agree bit for bit.
struct HuffmanTable {
    std::vector<std::pair<uint16_t, uint8_t>> entries;  // (symbol, length), canonical order

    void validate() const {
        if (entries.empty()) throw CodingError("empty huffman table");
        double kraft = 0;
        for (size_t i = 0; i < entries.size(); ++i) {
            auto [sym, len] = entries[i];
            if (len < 1) throw CorruptStreamError("huffman length below 1");
            if (i > 0) {
                auto [psym, plen] = entries[i - 1];
                if (plen > len || (plen == len && psym >= sym))
                    throw CorruptStreamError("huffman table not in canonical order");
            }
            kraft += std::ldexp(1.0, -static_cast<int>(len));
        }
        if (entries.size() > 1 && kraft > 1.0 + 1e-12) throw CorruptStreamError("huffman table violates Kraft");
    }

    uint8_t max_length() const {
        uint8_t m = 0;
        for (auto [s, l] : entries) m = std::max(m, l);
        return m;
    }
};

namespace detail {

struct HuffNode {
    uint64_t count;
    uint32_t min_symbol;  // deterministic tie-break
    int left = -1, right = -1;
    uint32_t symbol = 0;
    bool leaf = false;
};

}  // namespace detail

// Optimal prefix code over the present symbols of a histogram, canonicalized.
// A single present symbol gets a 1-bit code by convention.
inline HuffmanTable build_huffman(const std::map<uint32_t, uint64_t>& histogram) {
    std::vector<detail::HuffNode> nodes;
    for (auto [sym, count] : histogram) {
        if (count == 0) continue;
        if (sym > 0xffff) throw CodingError("symbol exceeds 16 bits");
        nodes.push_back({count, sym, -1, -1, sym, true});
    }
    if (nodes.empty()) throw CodingError("histogram has no present symbols");

    HuffmanTable table;
    if (nodes.size() == 1) {
        table.entries.emplace_back(static_cast<uint16_t>(nodes[0].symbol), 1);
        return table;
    }

    auto cmp = [&nodes](int a, int b) {
        if (nodes[a].count != nodes[b].count) return nodes[a].count > nodes[b].count;
        return nodes[a].min_symbol > nodes[b].min_symbol;
    };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) heap.push(i);
    while (heap.size() > 1) {
        int a = heap.top();
        heap.pop();
        int b = heap.top();
        heap.pop();
        detail::HuffNode parent{nodes[a].count + nodes[b].count, std::min(nodes[a].min_symbol, nodes[b].min_symbol),
                                a, b, 0, false};
        nodes.push_back(parent);
        heap.push(static_cast<int>(nodes.size()) - 1);
    }

    // depth-first code lengths
    std::vector<std::pair<int, uint8_t>> stack{{heap.top(), 0}};
    std::vector<std::pair<uint16_t, uint8_t>> lengths;
    while (!stack.empty()) {
        auto [idx, depth] = stack.back();
        stack.pop_back();
        const auto& n = nodes[idx];
        if (n.leaf) {
            lengths.emplace_back(static_cast<uint16_t>(n.symbol), depth);
        } else {
            stack.push_back({n.left, static_cast<uint8_t>(depth + 1)});
            stack.push_back({n.right, static_cast<uint8_t>(depth + 1)});
        }
    }
    std::sort(lengths.begin(), lengths.end(), [](auto a, auto b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    table.entries = std::move(lengths);
    return table;
}

inline std::map<uint32_t, uint64_t> histogram_of(const IndexGrid& grid) {
    std::map<uint32_t, uint64_t> h;
    for (uint32_t s : grid.data) ++h[s];
    return h;
}

inline double entropy_bits(const std::map<uint32_t, uint64_t>& histogram) {
    uint64_t total = 0;
    for (auto [s, c] : histogram) total += c;
    double h = 0;
    for (auto [s, c] : histogram) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

class BitWriter {
public:
    void put(uint32_t code, uint8_t len) {
        for (int i = len - 1; i >= 0; --i) {
            if (pos_ % 8 == 0) bytes_.push_back(0);
            if ((code >> i) & 1u) bytes_.back() |= static_cast<uint8_t>(0x80u >> (pos_ % 8));
            ++pos_;
        }
    }
    size_t bit_count() const { return pos_; }
    const std::vector<uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<uint8_t> bytes_;
    size_t pos_ = 0;
};

class BitReader {
public:
    BitReader(const uint8_t* data, size_t bit_count) : data_(data), bits_(bit_count) {}

    bool next() {
        if (pos_ >= bits_)
            throw CorruptStreamError("bit stream exhausted at bit offset " + std::to_string(pos_));
        bool b = (data_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
        ++pos_;
        return b;
    }
    size_t pos() const { return pos_; }

private:
    const uint8_t* data_;
    size_t bits_;
    size_t pos_ = 0;
};

namespace detail {

// canonical code assignment: per-length first codes and symbol offsets
struct CanonicalCodes {
    std::vector<uint32_t> code_of;    // dense by symbol (0xffffffff = absent)
    std::vector<uint8_t> len_of;
    std::vector<uint32_t> first_code; // by length
    std::vector<uint32_t> count;      // by length
    std::vector<uint32_t> offset;     // by length, into canonical symbol list
    std::vector<uint16_t> symbols;    // canonical order
    uint8_t max_len = 0;
};

inline CanonicalCodes canonical_codes(const HuffmanTable& table) {
    table.validate();
    CanonicalCodes cc;
    cc.max_len = table.max_length();
    cc.first_code.assign(cc.max_len + 1, 0);
    cc.count.assign(cc.max_len + 1, 0);
    cc.offset.assign(cc.max_len + 1, 0);
    uint16_t max_sym = 0;
    for (auto [sym, len] : table.entries) {
        ++cc.count[len];
        max_sym = std::max(max_sym, sym);
    }
    uint32_t code = 0, idx = 0;
    for (uint8_t len = 1; len <= cc.max_len; ++len) {
        cc.first_code[len] = code;
        cc.offset[len] = idx;
        code = (code + cc.count[len]) << 1;
        idx += cc.count[len];
    }
    cc.code_of.assign(max_sym + 1u, 0xffffffffu);
    cc.len_of.assign(max_sym + 1u, 0);
    std::vector<uint32_t> next = cc.first_code;
    for (auto [sym, len] : table.entries) {
        cc.symbols.push_back(sym);
        cc.code_of[sym] = next[len]++;
        cc.len_of[sym] = len;
    }
    return cc;
}

}  // namespace detail

// Row-major Huffman encoding of an index grid; padding bits are zero.
inline std::pair<std::vector<uint8_t>, uint32_t> encode_indices(const IndexGrid& grid, const HuffmanTable& table) {
    auto cc = detail::canonical_codes(table);
    BitWriter bw;
    for (uint32_t s : grid.data) {
        if (s >= cc.code_of.size() || cc.len_of[s] == 0)
            throw CodingError("symbol " + std::to_string(s) + " absent from huffman table");
        bw.put(cc.code_of[s], cc.len_of[s]);
    }
    return {bw.bytes(), static_cast<uint32_t>(bw.bit_count())};
}

// Decodes exactly `count` symbols into an h x w grid; trailing padding is ignored.
inline IndexGrid decode_indices(const uint8_t* bits, uint32_t bit_length, const HuffmanTable& table, size_t h,
                                size_t w) {
    auto cc = detail::canonical_codes(table);
    IndexGrid grid(h, w);
    BitReader br(bits, bit_length);
    for (size_t i = 0; i < grid.cells(); ++i) {
        uint32_t code = 0;
        uint8_t len = 0;
        for (;;) {
            code = (code << 1) | (br.next() ? 1u : 0u);
            ++len;
            if (len > cc.max_len)
                throw CorruptStreamError("invalid huffman prefix at bit offset " + std::to_string(br.pos()));
            uint32_t rel = code - cc.first_code[len];
            if (cc.count[len] && code >= cc.first_code[len] && rel < cc.count[len]) {
                grid.data[i] = cc.symbols[cc.offset[len] + rel];
                break;
            }
        }
    }
    return grid;
}

// Fixed-width fallback codes (entropy coding disabled).
inline std::pair<std::vector<uint8_t>, uint32_t> encode_indices_fixed(const IndexGrid& grid, uint8_t width) {
    BitWriter bw;
    for (uint32_t s : grid.data) {
        if (width < 32 && (s >> width) != 0) throw CodingError("index exceeds fixed code width");
        bw.put(s, width);
    }
    return {bw.bytes(), static_cast<uint32_t>(bw.bit_count())};
}

inline IndexGrid decode_indices_fixed(const uint8_t* bits, uint32_t bit_length, uint8_t width, size_t h, size_t w) {
    IndexGrid grid(h, w);
    BitReader br(bits, bit_length);
    for (size_t i = 0; i < grid.cells(); ++i) {
        uint32_t v = 0;
        for (uint8_t b = 0; b < width; ++b) v = (v << 1) | (br.next() ? 1u : 0u);
        grid.data[i] = v;
    }
    return grid;
}

}  // namespace holocodec

#endif
