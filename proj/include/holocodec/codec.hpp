#ifndef HOLOCODEC_CODEC_HPP
#define HOLOCODEC_CODEC_HPP

#include <map>

#include "holocodec/adapter.hpp"
#include "holocodec/bitstream.hpp"
#include "holocodec/losses.hpp"
#include "holocodec/retrieval.hpp"

namespace holocodec {

// Architecture of the hierarchical codec. Desk-scale defaults; the paper's
// configuration (f 4/8, R 4, depth 128, D 128, K 4096, deformable on) is a
// different assignment of the same fields.
struct CodecProfile {
    size_t f_bottom = 4, f_top = 8;   // spatial downsample factors
    size_t res_blocks = 2;            // R
    size_t channels = 32;             // residual channel depth
    size_t latent_dim = 32;           // D
    bool deformable_conv = false;
    size_t k_bottom = 64, k_top = 64;

    void validate() const {
        if (f_top != 2 * f_bottom) throw ConfigError("top factor must be twice the bottom factor");
        if (!is_pow2(f_bottom) || f_bottom < 2) throw ConfigError("bottom factor must be a power of two >= 2");
        if (res_blocks < 1 || latent_dim < 1 || channels < 1) throw ConfigError("profile sizes must be >= 1");
        if (k_bottom < 1 || k_top < 1) throw ConfigError("codebook sizes must be >= 1");
    }

    uint8_t id() const {
        return static_cast<uint8_t>(ilog2(f_bottom) | (deformable_conv ? 0x80 : 0));
    }
};

struct TrainSchedule {
    size_t stage1_epochs = 100;  // W
    size_t stage2_epochs = 0;
    double learning_rate = 1e-4;
    size_t batch_size = 8;
    double commitment_beta = 0.25;
    std::vector<size_t> stage2_sizes;  // sampled target codebook sizes
    uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (commitment_beta < 0) throw ConfigError("commitment beta must be >= 0");
    }
};

// Intensity-to-hologram preprocessing: the substituted phase initializer in
// front of the codec (the original uses a pretrained network here).
struct HologramPipeline {
    enum class Init { Zeros, Random, GS, SGD };
    double gamma = 2.2;
    Init init = Init::Zeros;
    size_t init_iterations = 30;
    double init_step = 0.5;
    uint64_t seed = 0;
};

// (A_h, P_h, A_t) input stack plus the reconstruction target.
struct HologramSample {
    Tensor input3;      // [3, H, W]
    AmplitudeMap target;
};

inline HologramSample make_hologram(const RGrid& image01, const OpticsConfig& optics, const HologramPipeline& pipe,
                                    uint64_t sample_seed) {
    AmplitudeMap a_t = amplitude_from_intensity(image01, pipe.gamma);
    const size_t h = image01.h, w = image01.w;

    RGrid p_t(h, w, 0.0);
    switch (pipe.init) {
        case HologramPipeline::Init::Zeros:
            break;
        case HologramPipeline::Init::Random: {
            Rng rng(pipe.seed ^ (0x9e3779b97f4a7c15ull * (sample_seed + 1)));
            std::uniform_real_distribution<double> u(-kPi, kPi);
            for (double& x : p_t.v) x = wrap_phase(u(rng));
            break;
        }
        case HologramPipeline::Init::GS:
        case HologramPipeline::Init::SGD: {
            RetrievalSettings rs;
            rs.iterations = pipe.init_iterations;
            rs.step_size = pipe.init_step;
            rs.seed = pipe.seed ^ sample_seed;
            PhaseMap hologram_phase = pipe.init == HologramPipeline::Init::GS
                                          ? gerchberg_saxton(a_t, optics, rs)
                                          : sgd_phase_retrieval(a_t, optics, rs);
            // retrieval returns a hologram-plane phase; bring it back to the
            // object plane so the forward propagation below stays uniform
            CGrid u(h, w);
            for (size_t i = 0; i < u.v.size(); ++i)
                u.v[i] = std::complex<double>(std::cos(hologram_phase.data.v[i]), std::sin(hologram_phase.data.v[i]));
            ComplexField obj = propagate({u, optics}, -optics.distance);
            for (size_t i = 0; i < p_t.v.size(); ++i) p_t.v[i] = std::arg(obj.data.v[i]);
            break;
        }
    }

    CGrid field(h, w);
    for (size_t i = 0; i < field.v.size(); ++i)
        field.v[i] = a_t.data.v[i] * std::complex<double>(std::cos(p_t.v[i]), std::sin(p_t.v[i]));
    ComplexField holo = propagate({field, optics}, optics.distance);

    HologramSample s{Tensor({3, h, w}), std::move(a_t)};
    for (size_t i = 0; i < h * w; ++i) {
        s.input3.data[i] = std::abs(holo.data.v[i]);
        s.input3.data[h * w + i] = std::arg(holo.data.v[i]);
        s.input3.data[2 * h * w + i] = s.target.data.v[i];
    }
    return s;
}

// --- tensor/grid conversions at the quantizer boundary ---

inline LatentGrid chw_to_latents(const Tensor& t) {
    LatentGrid g(t.shape[1], t.shape[2], t.shape[0]);
    for (size_t c = 0; c < t.shape[0]; ++c)
        for (size_t y = 0; y < t.shape[1]; ++y)
            for (size_t x = 0; x < t.shape[2]; ++x) g.at(y, x, c) = t.at3(c, y, x);
    return g;
}

inline Tensor latents_to_chw(const LatentGrid& g) {
    Tensor t({g.d, g.h, g.w});
    for (size_t c = 0; c < g.d; ++c)
        for (size_t y = 0; y < g.h; ++y)
            for (size_t x = 0; x < g.w; ++x) t.at3(c, y, x) = g.at(y, x, c);
    return t;
}

// Quantized latents a decoder consumes: bottom grid plus the top grid it
// upsamples internally.
struct FusedLatents {
    Tensor q_bottom;  // [D, hb, wb]
    Tensor q_top;     // [D, ht, wt]
};

// The hierarchical encoder/decoder with its codebooks and per-level adapters.
class CodecModel {
public:
    CodecProfile profile;
    OpticsConfig optics;
    LossWeights weights;
    std::map<std::string, ag::Var> params;
    Codebook book_bottom, book_top;
    AdapterModel adapter_bottom, adapter_top;
    bool stage1_done = false;
    bool books_initialized = false;

    CodecModel(const CodecProfile& p, const OpticsConfig& o, const LossWeights& w, uint64_t seed,
               size_t adapter_hidden = 64, size_t adapter_k_min = 0, size_t adapter_k_max = 0)
        : profile(p), optics(o), weights(w),
          book_bottom(p.k_bottom, p.latent_dim), book_top(p.k_top, p.latent_dim) {
        profile.validate();
        optics.validate();
        weights.validate();
        Rng rng(seed);
        build_params(rng);
        size_t kmin_b = adapter_k_min ? adapter_k_min : std::max<size_t>(1, p.k_bottom / 8);
        size_t kmax_b = adapter_k_max ? adapter_k_max : p.k_bottom;
        size_t kmin_t = adapter_k_min ? adapter_k_min : std::max<size_t>(1, p.k_top / 8);
        size_t kmax_t = adapter_k_max ? adapter_k_max : p.k_top;
        adapter_bottom = AdapterModel::init(p.latent_dim, adapter_hidden, kmin_b, kmax_b, rng);
        adapter_top = AdapterModel::init(p.latent_dim, adapter_hidden, kmin_t, kmax_t, rng);
    }

    // all trainable parameters in deterministic order
    std::vector<std::pair<std::string, ag::Var>> named_params(bool include_adapters) const {
        std::vector<std::pair<std::string, ag::Var>> out(params.begin(), params.end());
        if (include_adapters) {
            for (auto& kv : adapter_bottom.named_params("adapter_b")) out.push_back(kv);
            for (auto& kv : adapter_top.named_params("adapter_t")) out.push_back(kv);
        }
        return out;
    }

    // --- graph builders ---

    struct EncoderOut {
        ag::Var z_b0;  // [D, hb, wb] bottom latent before hierarchy fusion
        ag::Var z_t;   // [D, ht, wt]
    };

    EncoderOut encode_graph(const Tensor& input3) const {
        if (input3.shape.size() != 3 || input3.shape[0] != 3) throw ShapeError("encode: expected [3,H,W] input");
        if (input3.shape[1] % profile.f_top || input3.shape[2] % profile.f_top)
            throw ShapeError("encode: input extent not divisible by the top factor");
        ag::Var x = ag::constant(input3);
        size_t downs = static_cast<size_t>(ilog2(profile.f_bottom));
        for (size_t i = 0; i < downs; ++i)
            x = ag::relu(conv("enc_b.down" + std::to_string(i), x, 2, 1));
        x = conv("enc_b.tail", x, 1, 1);
        for (size_t r = 0; r < profile.res_blocks; ++r) x = resblock("enc_b.res" + std::to_string(r), x);
        ag::Var feat_b = x;

        ag::Var y = ag::relu(conv("enc_t.down", feat_b, 2, 1));
        y = conv("enc_t.tail", y, 1, 1);
        for (size_t r = 0; r < profile.res_blocks; ++r) y = resblock("enc_t.res" + std::to_string(r), y);

        return {conv("pre_vq_b0", feat_b, 1, 0), conv("pre_vq_t", y, 1, 0)};
    }

    ag::Var decode_top_graph(const ag::Var& q_t) const {
        ag::Var x = conv("dec_t.head", q_t, 1, 1);
        for (size_t r = 0; r < profile.res_blocks; ++r) x = resblock("dec_t.res" + std::to_string(r), x);
        return convT("dec_t.up", ag::relu(x), 2, 1);
    }

    ag::Var fuse_graph(const ag::Var& z_b0, const ag::Var& decoded_top) const {
        return conv("fuse", ag::concat_channels(z_b0, decoded_top), 1, 0);
    }

    ag::Var decode_graph(const ag::Var& q_b, const ag::Var& q_t) const {
        ag::Var up = convT("upsample_t", q_t, 2, 1);
        ag::Var x = conv("dec.head", ag::concat_channels(q_b, up), 1, 1);
        for (size_t r = 0; r < profile.res_blocks; ++r) x = resblock("dec.res" + std::to_string(r), x);
        size_t ups = static_cast<size_t>(ilog2(profile.f_bottom));
        for (size_t i = 0; i + 1 < ups; ++i)
            x = convT("dec.up" + std::to_string(i), ag::relu(x), 2, 1);
        x = convT("dec.out", ag::relu(x), 2, 1);
        return ag::scale(ag::tanh_op(x), kPi);  // phase in (-pi, pi]
    }

    // --- inference API ---

    std::pair<LatentGrid, LatentGrid> encode(const Tensor& input3) const {
        EncoderOut e = encode_graph(input3);
        return {chw_to_latents(e.z_b0->val), chw_to_latents(e.z_t->val)};
    }

    std::tuple<IndexGrid, IndexGrid, FusedLatents> hierarchical_quantize(const LatentGrid& bottom,
                                                                         const LatentGrid& top, const Codebook& bb,
                                                                         const Codebook& bt) const {
        if (bottom.d != profile.latent_dim || top.d != profile.latent_dim)
            throw ShapeError("hierarchical_quantize: latent dim mismatch");
        auto [idx_t, q_t] = quantize(top, bt);
        ag::Var q_t_var = ag::constant(latents_to_chw(q_t));
        ag::Var decoded_top = decode_top_graph(q_t_var);
        ag::Var z_b = fuse_graph(ag::constant(latents_to_chw(bottom)), decoded_top);
        auto [idx_b, q_b] = quantize(chw_to_latents(z_b->val), bb);
        return {idx_b, idx_t, FusedLatents{latents_to_chw(q_b), latents_to_chw(q_t)}};
    }

    PhaseMap decode(const FusedLatents& fused) const {
        if (fused.q_bottom.shape[0] != profile.latent_dim || fused.q_top.shape[0] != profile.latent_dim)
            throw ShapeError("decode: latent dim mismatch");
        if (fused.q_bottom.shape[1] != 2 * fused.q_top.shape[1] || fused.q_bottom.shape[2] != 2 * fused.q_top.shape[2])
            throw ShapeError("decode: bottom/top geometry mismatch");
        ag::Var phase = decode_graph(ag::constant(fused.q_bottom), ag::constant(fused.q_top));
        RGrid out(phase->val.shape[1], phase->val.shape[2]);
        std::copy(phase->val.data.begin(), phase->val.data.end(), out.v.begin());
        return PhaseMap{std::move(out)};
    }

private:
    void build_params(Rng& rng) {
        const size_t ch = profile.channels, d = profile.latent_dim;
        size_t downs = static_cast<size_t>(ilog2(profile.f_bottom));

        size_t in_ch = 3;
        for (size_t i = 0; i < downs; ++i) {
            add_conv(rng, "enc_b.down" + std::to_string(i), in_ch, ch, 4);
            in_ch = ch;
        }
        add_conv(rng, "enc_b.tail", ch, ch, 3);
        for (size_t r = 0; r < profile.res_blocks; ++r) add_resblock(rng, "enc_b.res" + std::to_string(r));

        add_conv(rng, "enc_t.down", ch, ch, 4);
        add_conv(rng, "enc_t.tail", ch, ch, 3);
        for (size_t r = 0; r < profile.res_blocks; ++r) add_resblock(rng, "enc_t.res" + std::to_string(r));

        add_conv(rng, "pre_vq_b0", ch, d, 1);
        add_conv(rng, "pre_vq_t", ch, d, 1);

        add_conv(rng, "dec_t.head", d, ch, 3);
        for (size_t r = 0; r < profile.res_blocks; ++r) add_resblock(rng, "dec_t.res" + std::to_string(r));
        add_convT(rng, "dec_t.up", ch, d, 4);

        add_conv(rng, "fuse", 2 * d, d, 1);
        add_convT(rng, "upsample_t", d, d, 4);

        add_conv(rng, "dec.head", 2 * d, ch, 3);
        for (size_t r = 0; r < profile.res_blocks; ++r) add_resblock(rng, "dec.res" + std::to_string(r));
        for (size_t i = 0; i + 1 < downs; ++i) add_convT(rng, "dec.up" + std::to_string(i), ch, ch, 4);
        add_convT(rng, "dec.out", ch, 1, 4);
    }

    void add_conv(Rng& rng, const std::string& name, size_t cin, size_t cout, size_t k) {
        double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        params[name + ".w"] = ag::param(uniform_init({cout, cin, k, k}, bound, rng));
        params[name + ".b"] = ag::param(Tensor({cout}));
        if (profile.deformable_conv && k == 3) {
            // offset predictor starts at zero so sampling begins on the grid
            params[name + ".off_w"] = ag::param(Tensor({2 * k * k, cin, k, k}));
            params[name + ".off_b"] = ag::param(Tensor({2 * k * k}));
        }
    }

    void add_convT(Rng& rng, const std::string& name, size_t cin, size_t cout, size_t k) {
        double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        params[name + ".w"] = ag::param(uniform_init({cin, cout, k, k}, bound, rng));
        params[name + ".b"] = ag::param(Tensor({cout}));
    }

    void add_resblock(Rng& rng, const std::string& name) {
        add_conv(rng, name + ".c3", profile.channels, profile.channels, 3);
        add_conv(rng, name + ".c1", profile.channels, profile.channels, 1);
    }

    ag::Var p(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("missing parameter " + name);
        return it->second;
    }

    ag::Var conv(const std::string& name, const ag::Var& x, size_t stride, size_t pad) const {
        if (profile.deformable_conv && params.count(name + ".off_w")) {
            ag::Var off = ag::conv2d(x, p(name + ".off_w"), p(name + ".off_b"), stride, pad);
            return ag::deform_conv2d(x, p(name + ".w"), p(name + ".b"), off, stride, pad);
        }
        return ag::conv2d(x, p(name + ".w"), p(name + ".b"), stride, pad);
    }

    ag::Var convT(const std::string& name, const ag::Var& x, size_t stride, size_t pad) const {
        return ag::conv_transpose2d(x, p(name + ".w"), p(name + ".b"), stride, pad);
    }

    ag::Var resblock(const std::string& name, const ag::Var& x) const {
        ag::Var r = conv(name + ".c3", ag::relu(x), 1, 1);
        r = conv(name + ".c1", ag::relu(r), 1, 0);
        return ag::add(x, r);
    }
};

// mean over cells of the squared L2 between two [D,h,w] tensors
inline ag::Var cellwise_sq_error(const ag::Var& a, const ag::Var& b) {
    ag::Var d = ag::sub(a, b);
    size_t cells = a->val.shape[1] * a->val.shape[2];
    return ag::scale(ag::sum(ag::mul(d, d)), 1.0 / static_cast<double>(cells));
}

}  // namespace holocodec

#endif
