#ifndef HOLOCODEC_PIPELINE_HPP
#define HOLOCODEC_PIPELINE_HPP

#include "holocodec/bitstream.hpp"
#include "holocodec/codec.hpp"

namespace holocodec {

// Image -> hologram -> indices -> serialized stream for one wavelength channel.
inline HoloBitstream compress_channel(const CodecModel& model, const RGrid& image01, uint8_t channel_id,
                                      const Codebook& book_b, const Codebook& book_t, const HologramPipeline& pipe,
                                      bool huffman = true, uint64_t sample_seed = 0) {
    if (!is_pow2(book_b.k) || !is_pow2(book_t.k))
        throw ConfigError("compress: codebook sizes on the wire must be powers of two");
    HologramSample sample = make_hologram(image01, model.optics, pipe, sample_seed);
    auto [bottom, top] = model.encode(sample.input3);
    auto [idx_b, idx_t, fused] = model.hierarchical_quantize(bottom, top, book_b, book_t);

    HoloBitstream s;
    s.channel_id = channel_id;
    s.profile_id = model.profile.id();
    s.log2_k_bottom = static_cast<uint8_t>(ilog2(book_b.k));
    s.log2_k_top = static_cast<uint8_t>(ilog2(book_t.k));
    s.bottom_h = static_cast<uint16_t>(idx_b.h);
    s.bottom_w = static_cast<uint16_t>(idx_b.w);
    s.top_h = static_cast<uint16_t>(idx_t.h);
    s.top_w = static_cast<uint16_t>(idx_t.w);
    s.frame_h = static_cast<uint16_t>(image01.h);
    s.frame_w = static_cast<uint16_t>(image01.w);
    auto [rh, rw] = model.optics.roi_for(image01.h, image01.w);
    s.roi_h = static_cast<uint16_t>(rh);
    s.roi_w = static_cast<uint16_t>(rw);
    s.wavelength_nm = static_cast<float>(model.optics.wavelength * 1e9);
    s.pitch_um = static_cast<float>(model.optics.pixel_pitch * 1e6);
    s.distance_mm = static_cast<float>(model.optics.distance * 1e3);
    s.flags = huffman ? HoloBitstream::kFlagHuffman : 0;
    s.bottom = encode_level(idx_b, huffman, s.log2_k_bottom);
    s.top = encode_level(idx_t, huffman, s.log2_k_top);
    return s;
}

// Stream + pre-distributed codebooks -> phase-only hologram. Never executes
// payload content; everything is bounds-checked table lookups.
inline PhaseMap decompress_channel(const CodecModel& model, const HoloBitstream& s, const Codebook& book_b,
                                   const Codebook& book_t) {
    s.validate();
    if (s.profile_id != model.profile.id()) throw ConfigError("stream profile does not match this codec");
    if (book_b.k != (1u << s.log2_k_bottom) || book_t.k != (1u << s.log2_k_top))
        throw RegistryMissError("codebook sizes do not match the stream header");
    if (book_b.d != model.profile.latent_dim || book_t.d != model.profile.latent_dim)
        throw ShapeError("codebook dimension does not match the codec");
    if (s.bottom_h != s.frame_h / model.profile.f_bottom || s.bottom_w != s.frame_w / model.profile.f_bottom ||
        s.top_h != s.frame_h / model.profile.f_top || s.top_w != s.frame_w / model.profile.f_top)
        throw CorruptStreamError("stream geometry inconsistent with the codec profile");

    IndexGrid idx_b = decode_level(s.bottom, s.huffman(), s.log2_k_bottom, s.bottom_h, s.bottom_w);
    IndexGrid idx_t = decode_level(s.top, s.huffman(), s.log2_k_top, s.top_h, s.top_w);

    FusedLatents fused;
    fused.q_bottom = Tensor({model.profile.latent_dim, idx_b.h, idx_b.w});
    fused.q_top = Tensor({model.profile.latent_dim, idx_t.h, idx_t.w});
    for (size_t y = 0; y < idx_b.h; ++y)
        for (size_t x = 0; x < idx_b.w; ++x)
            for (size_t c = 0; c < book_b.d; ++c)
                fused.q_bottom.at3(c, y, x) = book_b.row(idx_b.data[y * idx_b.w + x])[c];
    for (size_t y = 0; y < idx_t.h; ++y)
        for (size_t x = 0; x < idx_t.w; ++x)
            for (size_t c = 0; c < book_t.d; ++c)
                fused.q_top.at3(c, y, x) = book_t.row(idx_t.data[y * idx_t.w + x])[c];
    return model.decode(fused);
}

}  // namespace holocodec

#endif
