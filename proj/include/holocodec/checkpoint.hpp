#ifndef HOLOCODEC_CHECKPOINT_HPP
#define HOLOCODEC_CHECKPOINT_HPP

#include <json.hpp>

#include "holocodec/codec.hpp"

namespace holocodec {

// Self-describing checkpoint ("RVQN"): versioned header, JSON metadata
// (profile, optics, loss weights, stage flags, adapter ranges), then named
// f64 tensors for parameters and codebook state, crc32 at the end.
inline constexpr uint8_t kCheckpointVersion = 1;

namespace detail {

inline void put_f64(std::vector<uint8_t>& buf, double x) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(ByteReader& r) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(r.u8()) << (8 * i);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

inline void put_tensor(std::vector<uint8_t>& buf, const std::string& name, const Tensor& t) {
    put_u16(buf, static_cast<uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    put_u8(buf, static_cast<uint8_t>(t.shape.size()));
    for (size_t d : t.shape) put_u32(buf, static_cast<uint32_t>(d));
    for (double x : t.data) put_f64(buf, x);
}

inline std::pair<std::string, Tensor> get_tensor(ByteReader& r) {
    uint16_t nlen = r.u16();
    std::string name(nlen, '\0');
    r.bytes(reinterpret_cast<uint8_t*>(name.data()), nlen);
    uint8_t ndim = r.u8();
    std::vector<size_t> shape(ndim);
    for (auto& d : shape) d = r.u32();
    Tensor t(shape);
    for (double& x : t.data) x = get_f64(r);
    return {std::move(name), std::move(t)};
}

inline void put_book(std::vector<uint8_t>& buf, const Codebook& b) {
    put_u32(buf, static_cast<uint32_t>(b.k));
    put_u16(buf, static_cast<uint16_t>(b.d));
    put_f64(buf, b.decay);
    put_f64(buf, b.laplace_eps);
    for (double x : b.vectors) put_f64(buf, x);
    for (double x : b.ema_counts) put_f64(buf, x);
    for (double x : b.ema_sums) put_f64(buf, x);
}

inline Codebook get_book(ByteReader& r) {
    uint32_t k = r.u32();
    uint16_t d = r.u16();
    Codebook b(k, d);
    b.decay = get_f64(r);
    b.laplace_eps = get_f64(r);
    for (double& x : b.vectors) x = get_f64(r);
    for (double& x : b.ema_counts) x = get_f64(r);
    for (double& x : b.ema_sums) x = get_f64(r);
    return b;
}

}  // namespace detail

inline std::vector<uint8_t> serialize_checkpoint(const CodecModel& model) {
    nlohmann::json meta;
    meta["profile"] = {{"f_bottom", model.profile.f_bottom},     {"f_top", model.profile.f_top},
                       {"res_blocks", model.profile.res_blocks}, {"channels", model.profile.channels},
                       {"latent_dim", model.profile.latent_dim}, {"deformable_conv", model.profile.deformable_conv},
                       {"k_bottom", model.profile.k_bottom},     {"k_top", model.profile.k_top}};
    meta["optics"] = {{"wavelength", model.optics.wavelength}, {"pixel_pitch", model.optics.pixel_pitch},
                      {"distance", model.optics.distance},     {"pad_factor", model.optics.pad_factor},
                      {"roi_h", model.optics.roi_h},           {"roi_w", model.optics.roi_w}};
    meta["weights"] = {{"mse", model.weights.w_mse}, {"msssim", model.weights.w_msssim}, {"wfft", model.weights.w_wfft}};
    meta["stage1_done"] = model.stage1_done;
    meta["books_initialized"] = model.books_initialized;
    meta["adapter"] = {{"hidden", model.adapter_bottom.hidden},
                       {"k_min_b", model.adapter_bottom.k_min},
                       {"k_max_b", model.adapter_bottom.k_max},
                       {"k_min_t", model.adapter_top.k_min},
                       {"k_max_t", model.adapter_top.k_max}};
    std::string meta_str = meta.dump();

    std::vector<uint8_t> buf;
    buf.insert(buf.end(), {'R', 'V', 'Q', 'N'});
    put_u8(buf, kCheckpointVersion);
    put_u32(buf, static_cast<uint32_t>(meta_str.size()));
    buf.insert(buf.end(), meta_str.begin(), meta_str.end());

    auto named = model.named_params(true);
    put_u32(buf, static_cast<uint32_t>(named.size()));
    for (auto& [name, var] : named) detail::put_tensor(buf, name, var->val);
    detail::put_book(buf, model.book_bottom);
    detail::put_book(buf, model.book_top);
    put_u32(buf, crc32_of(buf));
    return buf;
}

inline CodecModel parse_checkpoint(const std::vector<uint8_t>& buf) {
    if (buf.size() < 13 || std::memcmp(buf.data(), "RVQN", 4) != 0)
        throw CorruptStreamError("not a checkpoint file");
    uint32_t crc_stored = 0;
    for (int i = 0; i < 4; ++i) crc_stored |= static_cast<uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
    if (crc32_of(buf.data(), buf.size() - 4) != crc_stored) throw CorruptStreamError("checkpoint checksum mismatch");

    ByteReader r(buf.data() + 4, buf.size() - 8);
    uint8_t version = r.u8();
    if (version != kCheckpointVersion)
        throw CorruptStreamError("checkpoint version " + std::to_string(version) + " not supported");
    uint32_t meta_len = r.u32();
    std::string meta_str(meta_len, '\0');
    r.bytes(reinterpret_cast<uint8_t*>(meta_str.data()), meta_len);
    nlohmann::json meta = nlohmann::json::parse(meta_str);

    CodecProfile profile;
    profile.f_bottom = meta["profile"]["f_bottom"];
    profile.f_top = meta["profile"]["f_top"];
    profile.res_blocks = meta["profile"]["res_blocks"];
    profile.channels = meta["profile"]["channels"];
    profile.latent_dim = meta["profile"]["latent_dim"];
    profile.deformable_conv = meta["profile"]["deformable_conv"];
    profile.k_bottom = meta["profile"]["k_bottom"];
    profile.k_top = meta["profile"]["k_top"];
    OpticsConfig optics;
    optics.wavelength = meta["optics"]["wavelength"];
    optics.pixel_pitch = meta["optics"]["pixel_pitch"];
    optics.distance = meta["optics"]["distance"];
    optics.pad_factor = meta["optics"]["pad_factor"];
    optics.roi_h = meta["optics"]["roi_h"];
    optics.roi_w = meta["optics"]["roi_w"];
    LossWeights weights{meta["weights"]["mse"], meta["weights"]["msssim"], meta["weights"]["wfft"]};

    CodecModel model(profile, optics, weights, /*seed=*/0, meta["adapter"]["hidden"], 0, 0);
    model.adapter_bottom.k_min = meta["adapter"]["k_min_b"];
    model.adapter_bottom.k_max = meta["adapter"]["k_max_b"];
    model.adapter_top.k_min = meta["adapter"]["k_min_t"];
    model.adapter_top.k_max = meta["adapter"]["k_max_t"];
    model.stage1_done = meta["stage1_done"];
    model.books_initialized = meta["books_initialized"];

    uint32_t ntensors = r.u32();
    std::map<std::string, Tensor> tensors;
    for (uint32_t i = 0; i < ntensors; ++i) {
        auto [name, t] = detail::get_tensor(r);
        tensors.emplace(std::move(name), std::move(t));
    }
    for (auto& [name, var] : model.named_params(true)) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw CorruptStreamError("checkpoint missing tensor " + name);
        if (it->second.shape != var->val.shape) throw CorruptStreamError("checkpoint tensor shape mismatch: " + name);
        var->val = it->second;
    }
    model.book_bottom = detail::get_book(r);
    model.book_top = detail::get_book(r);
    if (model.book_bottom.d != profile.latent_dim || model.book_top.d != profile.latent_dim)
        throw CorruptStreamError("checkpoint codebook dimension mismatch");
    return model;
}

inline void save_checkpoint(const std::string& path, const CodecModel& model) {
    auto buf = serialize_checkpoint(model);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write " + path);
    size_t n = std::fwrite(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (n != buf.size()) throw IoError("short write to " + path);
}

inline CodecModel load_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> buf(sz > 0 ? static_cast<size_t>(sz) : 0);
    size_t n = std::fread(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (n != buf.size()) throw IoError("short read from " + path);
    return parse_checkpoint(buf);
}

}  // namespace holocodec

#endif
