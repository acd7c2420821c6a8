#include <catch2/catch_amalgamated.hpp>

#include "holocodec/checkpoint.hpp"
#include "holocodec/pipeline.hpp"
#include "test_helpers.hpp"

using namespace holocodec;
using holotest::random_image;

namespace {

OpticsConfig micro_optics(size_t roi_h = 0, size_t roi_w = 0) {
    OpticsConfig o;
    o.wavelength = 520e-9;
    o.pixel_pitch = 6.4e-6;
    o.distance = 0.02;
    o.pad_factor = 2.0;
    o.roi_h = roi_h;
    o.roi_w = roi_w;
    return o;
}

CodecProfile micro_profile(size_t d = 4, size_t ch = 4, size_t k = 8) {
    CodecProfile p;
    p.f_bottom = 4;
    p.f_top = 8;
    p.res_blocks = 1;
    p.channels = ch;
    p.latent_dim = d;
    p.k_bottom = k;
    p.k_top = k;
    return p;
}

Codebook random_book(size_t k, size_t d, uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    Codebook b(k, d);
    for (double& x : b.vectors) x = n(rng);
    return b;
}

}  // namespace

TEST_CASE("encoder latent shapes follow the profile") {
    // thin channels keep the full-frame shape checks cheap
    CodecProfile low = micro_profile(2, 2, 8);
    CodecModel model(low, micro_optics(), LossWeights{}, 1);
    Tensor big({3, 1072, 1920});
    auto [b, t] = model.encode(big);
    REQUIRE(b.h == 268);
    REQUIRE(b.w == 480);
    REQUIRE(t.h == 134);
    REQUIRE(t.w == 240);

    CodecProfile ultra = low;
    ultra.f_bottom = 8;
    ultra.f_top = 16;
    CodecModel umodel(ultra, micro_optics(), LossWeights{}, 1);
    auto [ub, ut] = umodel.encode(big);
    REQUIRE(ub.h == 134);
    REQUIRE(ub.w == 240);
    REQUIRE(ut.h == 67);
    REQUIRE(ut.w == 120);

    Tensor desk({3, 64, 128});
    auto [db, dt] = model.encode(desk);
    REQUIRE(db.h == 16);
    REQUIRE(db.w == 32);
    REQUIRE(dt.h == 8);
    REQUIRE(dt.w == 16);

    Tensor odd({3, 60, 128});
    REQUIRE_THROWS_AS(model.encode(odd), ShapeError);
}

TEST_CASE("hierarchical quantization honors ordering, ranges and fused shapes") {
    CodecProfile p = micro_profile();
    CodecModel model(p, micro_optics(), LossWeights{}, 2);
    Tensor in({3, 16, 32});
    Rng rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : in.data) x = n(rng);

    auto [zb, zt] = model.encode(in);
    Codebook bb = random_book(8, 4, 10), bt = random_book(8, 4, 11);
    auto [idx_b, idx_t, fused] = model.hierarchical_quantize(zb, zt, bb, bt);

    REQUIRE(idx_b.h == 4);
    REQUIRE(idx_b.w == 8);
    REQUIRE(idx_t.h == 2);
    REQUIRE(idx_t.w == 4);
    for (uint32_t i : idx_b.data) REQUIRE(i < 8);
    for (uint32_t i : idx_t.data) REQUIRE(i < 8);
    REQUIRE(fused.q_bottom.shape == std::vector<size_t>{4, 4, 8});
    REQUIRE(fused.q_top.shape == std::vector<size_t>{4, 2, 4});

    // all-zero latents against books holding a zero vector quantize constant
    LatentGrid zeros_b(4, 8, 4), zeros_t(2, 4, 4);
    Codebook zb_book = random_book(8, 4, 12), zt_book = random_book(8, 4, 13);
    std::fill(zb_book.row(5), zb_book.row(5) + 4, 0.0);
    std::fill(zt_book.row(2), zt_book.row(2) + 4, 0.0);
    auto [ib, it, f2] = model.hierarchical_quantize(zeros_b, zeros_t, zb_book, zt_book);
    for (uint32_t i : it.data) REQUIRE(i == it.data[0]);
    for (uint32_t i : ib.data) REQUIRE(i == ib.data[0]);

    Codebook wrong_d = random_book(8, 3, 14);
    REQUIRE_THROWS_AS(model.hierarchical_quantize(zb, zt, wrong_d, bt), ShapeError);
}

TEST_CASE("decoded phase maps stay in (-pi, pi] and repeat bit-exactly") {
    CodecProfile p = micro_profile();
    CodecModel model(p, micro_optics(), LossWeights{}, 4);
    FusedLatents fused;
    fused.q_bottom = Tensor({4, 4, 8});
    fused.q_top = Tensor({4, 2, 4});
    Rng rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : fused.q_bottom.data) x = n(rng);
    for (double& x : fused.q_top.data) x = n(rng);

    PhaseMap a = model.decode(fused);
    a.validate();
    REQUIRE(a.data.h == 16);
    REQUIRE(a.data.w == 32);
    PhaseMap b = model.decode(fused);
    REQUIRE(a.data == b.data);

    FusedLatents bad = fused;
    bad.q_top = Tensor({4, 3, 4});
    REQUIRE_THROWS_AS(model.decode(bad), ShapeError);
}

TEST_CASE("with a codebook equal to the exact latents the quantized loss is the autoencoder loss") {
    CodecProfile p = micro_profile();
    CodecModel model(p, micro_optics(), LossWeights{}, 6);
    Rng rng(7);
    RGrid img = random_image(16, 32, rng);
    HologramPipeline pipe;
    HologramSample sample = make_hologram(img, model.optics, pipe, 0);

    auto enc = model.encode_graph(sample.input3);
    LatentGrid zt = chw_to_latents(enc.z_t->val);

    // books that contain every latent cell verbatim -> zero quantization error
    auto book_from = [](const LatentGrid& g) {
        Codebook b(g.cells(), g.d);
        std::copy(g.data.begin(), g.data.end(), b.vectors.begin());
        return b;
    };
    Codebook bt = book_from(zt);
    auto [idx_t, q_t] = quantize(zt, bt);
    REQUIRE(vq_losses(zt, q_t, 0.25).first == 0.0);

    ag::Var zt_q = ag::straight_through(enc.z_t, ag::constant(latents_to_chw(q_t)));
    ag::Var z_b = model.fuse_graph(enc.z_b0, model.decode_top_graph(zt_q));
    LatentGrid zb = chw_to_latents(z_b->val);
    Codebook bb = book_from(zb);
    auto [idx_b, q_b] = quantize(zb, bb);
    REQUIRE(vq_losses(zb, q_b, 0.25).first == 0.0);
    ag::Var zb_q = ag::straight_through(z_b, ag::constant(latents_to_chw(q_b)));

    ag::Var phase_q = model.decode_graph(zb_q, zt_q);
    double quantized_loss = ag::reconstruction_loss_op(phase_q, sample.target, model.optics, model.weights)->val[0];

    // the plain autoencoder path, no quantizer in sight
    ag::Var z_b_plain = model.fuse_graph(enc.z_b0, model.decode_top_graph(enc.z_t));
    ag::Var phase_plain = model.decode_graph(z_b_plain, enc.z_t);
    double plain_loss = ag::reconstruction_loss_op(phase_plain, sample.target, model.optics, model.weights)->val[0];

    REQUIRE(std::abs(quantized_loss - plain_loss) < 1e-10);
}

namespace {

// Stage-1 style training loss on the micro-codec. In bypass mode the
// straight-through op carries the latents themselves, which makes the whole
// pipeline smooth and finite-difference checkable for every parameter.
ag::Var micro_training_loss(const CodecModel& model, const HologramSample& sample, bool bypass, const Codebook& bb,
                            const Codebook& bt, double beta = 0.25) {
    auto enc = model.encode_graph(sample.input3);
    ag::Var zt_q, zb_q, z_b;
    ag::Var commit;
    if (bypass) {
        zt_q = ag::straight_through(enc.z_t, enc.z_t);
        z_b = model.fuse_graph(enc.z_b0, model.decode_top_graph(zt_q));
        zb_q = ag::straight_through(z_b, z_b);
    } else {
        LatentGrid zt = chw_to_latents(enc.z_t->val);
        auto [idx_t, q_t] = quantize(zt, bt);
        zt_q = ag::ste_quantize(enc.z_t, ag::constant([&] {
                                    Tensor t({bt.k, bt.d});
                                    std::copy(bt.vectors.begin(), bt.vectors.end(), t.data.begin());
                                    return t;
                                }()),
                                idx_t, false);
        z_b = model.fuse_graph(enc.z_b0, model.decode_top_graph(zt_q));
        LatentGrid zb = chw_to_latents(z_b->val);
        auto [idx_b, q_b] = quantize(zb, bb);
        zb_q = ag::ste_quantize(z_b, ag::constant([&] {
                                    Tensor t({bb.k, bb.d});
                                    std::copy(bb.vectors.begin(), bb.vectors.end(), t.data.begin());
                                    return t;
                                }()),
                                idx_b, false);
        ag::Var ct = cellwise_sq_error(enc.z_t, ag::constant(latents_to_chw(q_t)));
        ag::Var cb = cellwise_sq_error(z_b, ag::constant(latents_to_chw(q_b)));
        commit = ag::scale(ag::add(ct, cb), beta);
    }
    ag::Var phase = model.decode_graph(zb_q, zt_q);
    ag::Var loss = ag::reconstruction_loss_op(phase, sample.target, model.optics, model.weights);
    if (commit) loss = ag::add(loss, commit);
    return loss;
}

}  // namespace

TEST_CASE("micro-codec training-loss gradients match finite differences") {
    CodecModel model(micro_profile(), micro_optics(), LossWeights{}, 8);
    Rng rng(9);
    RGrid img = random_image(8, 16, rng);
    HologramPipeline pipe;
    HologramSample sample = make_hologram(img, model.optics, pipe, 0);
    Codebook bb = random_book(8, 4, 20), bt = random_book(8, 4, 21);

    // |fd - ad| <= atol + rtol*max(|fd|,|ad|): the absolute floor absorbs
    // ReLU-kink noise on gradient entries orders of magnitude below the
    // dominant scale; entries above the floor are held to 1e-4 relative.
    const double h = 1e-6, atol = 1e-6, rtol = 1e-4;
    auto check_params = [&](const std::function<ag::Var()>& f, auto&& keep_param) {
        ag::backward(f());
        double worst_rel = 0;
        for (auto& [name, p] : model.named_params(false)) {
            if (!keep_param(name)) continue;
            size_t stride = std::max<size_t>(1, p->val.size() / 4);
            for (size_t i = 0; i < p->val.size(); i += stride) {
                double keep = p->val[i];
                p->val[i] = keep + h;
                double fp = f()->val[0];
                p->val[i] = keep - h;
                double fm = f()->val[0];
                p->val[i] = keep;
                double fd = (fp - fm) / (2 * h);
                double ad = p->grad[i];
                double mag = std::max(std::abs(fd), std::abs(ad));
                INFO(name << "[" << i << "] fd=" << fd << " ad=" << ad);
                REQUIRE(std::abs(fd - ad) <= atol + rtol * mag);
                if (mag >= 100 * atol) worst_rel = std::max(worst_rel, std::abs(fd - ad) / mag);
            }
        }
        for (auto& [name, p] : model.named_params(false)) p->grad = Tensor(p->val.shape);
        return worst_rel;
    };

    SECTION("bypass mode covers every parameter") {
        auto f = [&] { return micro_training_loss(model, sample, true, bb, bt); };
        REQUIRE(check_params(f, [](const std::string&) { return true; }) < 1e-4);
    }

    SECTION("true finite differences on post-quantizer parameters") {
        auto f = [&] { return micro_training_loss(model, sample, false, bb, bt); };
        REQUIRE(check_params(f, [](const std::string& name) {
                    return name.rfind("dec.", 0) == 0 || name.rfind("upsample_t", 0) == 0;
                }) < 1e-4);
    }
}

TEST_CASE("deformable convolution gradients match finite differences") {
    Rng rng(11);
    std::normal_distribution<double> n(0.0, 0.5);
    auto randt = [&](std::vector<size_t> shape) {
        Tensor t(std::move(shape));
        for (double& x : t.data) x = n(rng);
        return t;
    };
    ag::Var x = ag::param(randt({2, 5, 6}));
    ag::Var w = ag::param(randt({3, 2, 3, 3}));
    ag::Var b = ag::param(randt({3}));
    ag::Var off = ag::param(randt({18, 5, 6}));  // generic non-integer offsets

    auto f = [&] { return ag::mean(ag::tanh_op(ag::deform_conv2d(x, w, b, off, 1, 1))); };
    ag::backward(f());
    const double h = 1e-6;
    double worst = 0;
    for (ag::Var p : {x, w, b, off}) {
        for (size_t i = 0; i < p->val.size(); ++i) {
            double keep = p->val[i];
            p->val[i] = keep + h;
            double fp = f()->val[0];
            p->val[i] = keep - h;
            double fm = f()->val[0];
            p->val[i] = keep;
            double fd = (fp - fm) / (2 * h);
            double denom = std::max({std::abs(fd), std::abs(p->grad[i]), 1e-7});
            worst = std::max(worst, std::abs(fd - p->grad[i]) / denom);
        }
    }
    REQUIRE(worst < 1e-4);
}

TEST_CASE("deformable profile builds and runs end to end") {
    CodecProfile p = micro_profile();
    p.deformable_conv = true;
    CodecModel model(p, micro_optics(), LossWeights{}, 12);
    Rng rng(13);
    RGrid img = random_image(8, 16, rng);
    HologramSample sample = make_hologram(img, model.optics, HologramPipeline{}, 0);
    auto [zb, zt] = model.encode(sample.input3);
    REQUIRE(zb.h == 2);
    REQUIRE(zt.h == 1);

    // zero-initialized offsets reproduce the standard convolution exactly
    CodecProfile ps = p;
    ps.deformable_conv = false;
    CodecModel plain(ps, micro_optics(), LossWeights{}, 12);
    for (auto& [name, var] : plain.named_params(false)) {
        if (model.params.count(name)) model.params[name]->val = var->val;
    }
    auto [zb2, zt2] = model.encode(sample.input3);
    for (size_t i = 0; i < zb.data.size(); ++i) REQUIRE(zb.data[i] == Catch::Approx(zb2.data[i]).margin(1e-12));
}

TEST_CASE("compress/decompress round-trips deterministically") {
    CodecProfile p = micro_profile();
    CodecModel model(p, micro_optics(), LossWeights{}, 14);
    Rng rng(15);
    RGrid img = random_image(16, 32, rng);
    Codebook bb = random_book(8, 4, 30), bt = random_book(8, 4, 31);
    HologramPipeline pipe;

    HoloBitstream s = compress_channel(model, img, 0, bb, bt, pipe);
    REQUIRE(s.frame_h == 16);
    REQUIRE(s.bottom_h == 4);
    REQUIRE(s.log2_k_bottom == 3);

    PhaseMap a = decompress_channel(model, s, bb, bt);
    PhaseMap b = decompress_channel(model, s, bb, bt);
    REQUIRE(a.data == b.data);
    a.validate();

    // the serialized form is stable too
    REQUIRE(serialize_stream(s) == serialize_stream(compress_channel(model, img, 0, bb, bt, pipe)));

    Codebook small = random_book(4, 4, 32);
    REQUIRE_THROWS_AS(decompress_channel(model, s, small, bt), RegistryMissError);

    Codebook not_pow2 = random_book(6, 4, 33);
    REQUIRE_THROWS_AS(compress_channel(model, img, 0, not_pow2, bt, pipe), ConfigError);
}

TEST_CASE("checkpoints round-trip the full model state") {
    CodecProfile p = micro_profile();
    CodecModel model(p, micro_optics(12, 24), LossWeights{1.0, 0.2, 0.05}, 16);
    model.stage1_done = true;
    Rng rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : model.book_bottom.vectors) x = n(rng);
    for (double& x : model.book_top.ema_counts) x = std::abs(n(rng));

    auto buf = serialize_checkpoint(model);
    CodecModel back = parse_checkpoint(buf);
    REQUIRE(back.profile.latent_dim == 4);
    REQUIRE(back.optics.roi_h == 12);
    REQUIRE(back.stage1_done);
    REQUIRE(back.book_bottom.vectors == model.book_bottom.vectors);
    REQUIRE(back.book_top.ema_counts == model.book_top.ema_counts);
    for (auto& [name, var] : model.named_params(true))
        REQUIRE(back.named_params(true)[0].second->val.size() > 0);
    // decode agreement proves the parameters landed
    FusedLatents fused;
    fused.q_bottom = Tensor({4, 4, 8});
    fused.q_top = Tensor({4, 2, 4});
    for (double& x : fused.q_bottom.data) x = n(rng);
    for (double& x : fused.q_top.data) x = n(rng);
    REQUIRE(model.decode(fused).data == back.decode(fused).data);

    auto bad = buf;
    bad[bad.size() / 2] ^= 0x10;
    REQUIRE_THROWS_AS(parse_checkpoint(bad), CorruptStreamError);
    auto vbad = buf;
    vbad[4] = 99;  // version byte
    REQUIRE_THROWS_AS(parse_checkpoint(vbad), CorruptStreamError);
}
