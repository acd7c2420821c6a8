#ifndef HOLOCODEC_BITSTREAM_HPP
#define HOLOCODEC_BITSTREAM_HPP

#include "holocodec/huffman.hpp"

namespace holocodec {

// One entropy-coded index payload inside a stream.
struct LevelPayload {
    HuffmanTable table;        // empty when fixed-width coding is used
    uint32_t bit_length = 0;
    std::vector<uint8_t> bits;
};

// Serialized hologram stream (".ravq"). Layout, all little-endian:
//   magic "RAVQ", version u8, channel u8, profile u8,
//   log2 K bottom u8, log2 K top u8,
//   bottom h,w | top h,w | frame H,W | roi h,w        (8 x u16)
//   wavelength nm, pitch um, distance mm              (3 x f32)
//   flags u8 (bit 0: huffman)
//   per level (bottom, top): symbol count u16, (symbol u16, length u8)...,
//                            payload bit length u32, packed bits
//   crc32 u32 over everything before it.
struct HoloBitstream {
    static constexpr uint8_t kVersion = 1;
    static constexpr uint8_t kFlagHuffman = 0x01;

    uint8_t version = kVersion;
    uint8_t channel_id = 0;
    uint8_t profile_id = 0;
    uint8_t log2_k_bottom = 0;
    uint8_t log2_k_top = 0;
    uint16_t bottom_h = 0, bottom_w = 0;
    uint16_t top_h = 0, top_w = 0;
    uint16_t frame_h = 0, frame_w = 0;
    uint16_t roi_h = 0, roi_w = 0;
    float wavelength_nm = 0, pitch_um = 0, distance_mm = 0;
    uint8_t flags = kFlagHuffman;
    LevelPayload bottom, top;

    bool huffman() const { return flags & kFlagHuffman; }

    void validate() const {
        if (version != kVersion) throw CorruptStreamError("unsupported stream version");
        if (log2_k_bottom > 16 || log2_k_top > 16) throw CorruptStreamError("codebook size id out of range");
        if (bottom_h == 0 || bottom_w == 0 || top_h == 0 || top_w == 0 || frame_h == 0 || frame_w == 0)
            throw CorruptStreamError("empty stream geometry");
        if (roi_h > frame_h || roi_w > frame_w) throw CorruptStreamError("roi exceeds frame");
        for (const LevelPayload* lv : {&bottom, &top}) {
            if (lv->bits.size() != (lv->bit_length + 7u) / 8u)
                throw CorruptStreamError("payload byte count does not match bit length");
            if (huffman()) lv->table.validate();
        }
    }

    bool operator==(const HoloBitstream& o) const {
        auto level_eq = [](const LevelPayload& a, const LevelPayload& b) {
            return a.table.entries == b.table.entries && a.bit_length == b.bit_length && a.bits == b.bits;
        };
        return version == o.version && channel_id == o.channel_id && profile_id == o.profile_id &&
               log2_k_bottom == o.log2_k_bottom && log2_k_top == o.log2_k_top && bottom_h == o.bottom_h &&
               bottom_w == o.bottom_w && top_h == o.top_h && top_w == o.top_w && frame_h == o.frame_h &&
               frame_w == o.frame_w && roi_h == o.roi_h && roi_w == o.roi_w && wavelength_nm == o.wavelength_nm &&
               pitch_um == o.pitch_um && distance_mm == o.distance_mm && flags == o.flags &&
               level_eq(bottom, o.bottom) && level_eq(top, o.top);
    }
};

inline std::vector<uint8_t> serialize_stream(const HoloBitstream& s) {
    s.validate();
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), {'R', 'A', 'V', 'Q'});
    put_u8(buf, s.version);
    put_u8(buf, s.channel_id);
    put_u8(buf, s.profile_id);
    put_u8(buf, s.log2_k_bottom);
    put_u8(buf, s.log2_k_top);
    for (uint16_t v : {s.bottom_h, s.bottom_w, s.top_h, s.top_w, s.frame_h, s.frame_w, s.roi_h, s.roi_w})
        put_u16(buf, v);
    put_f32(buf, s.wavelength_nm);
    put_f32(buf, s.pitch_um);
    put_f32(buf, s.distance_mm);
    put_u8(buf, s.flags);
    for (const LevelPayload* lv : {&s.bottom, &s.top}) {
        put_u16(buf, static_cast<uint16_t>(lv->table.entries.size()));
        for (auto [sym, len] : lv->table.entries) {
            put_u16(buf, sym);
            put_u8(buf, len);
        }
        put_u32(buf, lv->bit_length);
        buf.insert(buf.end(), lv->bits.begin(), lv->bits.end());
    }
    put_u32(buf, crc32_of(buf));
    return buf;
}

inline HoloBitstream parse_stream(const std::vector<uint8_t>& buf) {
    if (buf.size() < 8 || std::memcmp(buf.data(), "RAVQ", 4) != 0)
        throw CorruptStreamError("not a hologram stream");
    uint32_t crc_stored = 0;
    for (int i = 0; i < 4; ++i) crc_stored |= static_cast<uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
    if (crc32_of(buf.data(), buf.size() - 4) != crc_stored) throw CorruptStreamError("stream checksum mismatch");

    ByteReader r(buf.data() + 4, buf.size() - 8);
    HoloBitstream s;
    s.version = r.u8();
    if (s.version != HoloBitstream::kVersion)
        throw CorruptStreamError("unsupported stream version " + std::to_string(s.version));
    s.channel_id = r.u8();
    s.profile_id = r.u8();
    s.log2_k_bottom = r.u8();
    s.log2_k_top = r.u8();
    for (uint16_t* v : {&s.bottom_h, &s.bottom_w, &s.top_h, &s.top_w, &s.frame_h, &s.frame_w, &s.roi_h, &s.roi_w})
        *v = r.u16();
    s.wavelength_nm = r.f32();
    s.pitch_um = r.f32();
    s.distance_mm = r.f32();
    s.flags = r.u8();
    for (LevelPayload* lv : {&s.bottom, &s.top}) {
        uint16_t nsym = r.u16();
        lv->table.entries.reserve(nsym);
        for (uint16_t i = 0; i < nsym; ++i) {
            uint16_t sym = r.u16();
            uint8_t len = r.u8();
            lv->table.entries.emplace_back(sym, len);
        }
        lv->bit_length = r.u32();
        size_t nbytes = (static_cast<size_t>(lv->bit_length) + 7) / 8;
        if (nbytes > r.remaining()) throw CorruptStreamError("payload extends past stream end");
        lv->bits.resize(nbytes);
        r.bytes(lv->bits.data(), nbytes);
    }
    if (r.remaining() != 0) throw CorruptStreamError("trailing bytes after payloads");
    s.validate();
    return s;
}

// --- index packing into a stream ---

inline LevelPayload encode_level(const IndexGrid& grid, bool huffman, uint8_t log2_k) {
    LevelPayload lv;
    if (huffman) {
        lv.table = build_huffman(histogram_of(grid));
        auto [bytes, bits] = encode_indices(grid, lv.table);
        lv.bits = std::move(bytes);
        lv.bit_length = bits;
    } else {
        auto [bytes, bits] = encode_indices_fixed(grid, log2_k);
        lv.bits = std::move(bytes);
        lv.bit_length = bits;
    }
    return lv;
}

inline IndexGrid decode_level(const LevelPayload& lv, bool huffman, uint8_t log2_k, size_t h, size_t w) {
    IndexGrid g = huffman ? decode_indices(lv.bits.data(), lv.bit_length, lv.table, h, w)
                          : decode_indices_fixed(lv.bits.data(), lv.bit_length, log2_k, h, w);
    uint32_t k = 1u << log2_k;
    for (uint32_t s : g.data)
        if (s >= k) throw CorruptStreamError("decoded index exceeds codebook size");
    return g;
}

// --- rate accounting ---

// Total serialized bits divided by the reference pixel count (frame H*W by
// convention).
inline double bpp(const HoloBitstream& s, size_t reference_pixels) {
    if (reference_pixels == 0) throw ConfigError("bpp: zero reference pixels");
    return static_cast<double>(serialize_stream(s).size() * 8) / static_cast<double>(reference_pixels);
}

// Pre-entropy rate: sum over levels of cells * ceil(log2 K) over the pixels.
inline double bpp_fixed_length(const HoloBitstream& s, size_t reference_pixels) {
    if (reference_pixels == 0) throw ConfigError("bpp: zero reference pixels");
    uint64_t bits = static_cast<uint64_t>(s.bottom_h) * s.bottom_w * s.log2_k_bottom +
                    static_cast<uint64_t>(s.top_h) * s.top_w * s.log2_k_top;
    return static_cast<double>(bits) / static_cast<double>(reference_pixels);
}

// --- multi-channel container ("RVQM"): offsets + concatenated streams ---

inline std::vector<uint8_t> serialize_multi(const std::vector<std::vector<uint8_t>>& channel_streams) {
    if (channel_streams.empty() || channel_streams.size() > 255) throw ConfigError("1..255 channels supported");
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), {'R', 'V', 'Q', 'M'});
    put_u8(buf, 1);
    put_u8(buf, static_cast<uint8_t>(channel_streams.size()));
    size_t header = buf.size() + channel_streams.size() * 8;
    size_t off = header;
    for (const auto& cs : channel_streams) {
        put_u32(buf, static_cast<uint32_t>(off));
        put_u32(buf, static_cast<uint32_t>(cs.size()));
        off += cs.size();
    }
    for (const auto& cs : channel_streams) buf.insert(buf.end(), cs.begin(), cs.end());
    return buf;
}

inline std::vector<std::vector<uint8_t>> parse_multi(const std::vector<uint8_t>& buf) {
    if (buf.size() >= 4 && std::memcmp(buf.data(), "RAVQ", 4) == 0) return {buf};  // bare single stream
    if (buf.size() < 6 || std::memcmp(buf.data(), "RVQM", 4) != 0)
        throw CorruptStreamError("not a hologram container");
    ByteReader r(buf.data() + 4, buf.size() - 4);
    uint8_t version = r.u8();
    if (version != 1) throw CorruptStreamError("unsupported container version");
    uint8_t n = r.u8();
    if (n == 0) throw CorruptStreamError("container with no channels");
    std::vector<std::vector<uint8_t>> out;
    for (uint8_t i = 0; i < n; ++i) {
        uint32_t off = r.u32(), len = r.u32();
        if (static_cast<uint64_t>(off) + len > buf.size()) throw CorruptStreamError("channel offset out of range");
        out.emplace_back(buf.begin() + off, buf.begin() + off + len);
    }
    return out;
}

}  // namespace holocodec

#endif
