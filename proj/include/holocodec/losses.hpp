#ifndef HOLOCODEC_LOSSES_HPP
#define HOLOCODEC_LOSSES_HPP

#include <memory>

#include "holocodec/autograd.hpp"
#include "holocodec/optics.hpp"

namespace holocodec {

// Fixed radial sensitivity used by the frequency-domain loss: unit weight at
// DC falling off as 1/(1 + (r/r0)^2) toward high frequencies.
inline constexpr double kWfftRadius = 0.25;

inline RGrid wfft_weights(size_t h, size_t w) {
    RGrid s(h, w);
    for (size_t y = 0; y < h; ++y) {
        double fu = fft_freq(y, h, 1.0);  // centered cycles per sample in [-0.5, 0.5)
        for (size_t x = 0; x < w; ++x) {
            double fv = fft_freq(x, w, 1.0);
            double r2 = fu * fu + fv * fv;
            s.at(y, x) = 1.0 / (1.0 + r2 / (kWfftRadius * kWfftRadius));
        }
    }
    return s;
}

// Sensitivity-weighted squared distance between DFT spectra:
//   sum_uv s(u,v) |F_a - F_b|^2 / (h*w)^2.
// Zero iff the inputs are equal; symmetric by construction.
inline double watson_dft_loss(const RGrid& a, const RGrid& b) {
    if (!a.same_shape(b)) throw ShapeError("watson_dft_loss: shape mismatch");
    CGrid d(a.h, a.w);
    for (size_t i = 0; i < d.v.size(); ++i) d.v[i] = a.v[i] - b.v[i];
    CGrid f = fft2(d);
    RGrid s = wfft_weights(a.h, a.w);
    double acc = 0;
    for (size_t i = 0; i < f.v.size(); ++i) acc += s.v[i] * std::norm(f.v[i]);
    double n = static_cast<double>(a.h * a.w);
    return acc / (n * n);
}

namespace ag {

// Differentiable Watson-DFT term against a fixed target.
inline Var wfft_loss(const Var& a, const Tensor& target) {
    if (!a->val.same_shape(target)) throw ShapeError("wfft_loss: shape mismatch");
    const size_t h = a->val.shape[1], w = a->val.shape[2];
    RGrid ga(h, w), gb(h, w);
    std::copy(a->val.data.begin(), a->val.data.end(), ga.v.begin());
    std::copy(target.data.begin(), target.data.end(), gb.v.begin());

    auto fd = std::make_shared<CGrid>(h, w);
    for (size_t i = 0; i < fd->v.size(); ++i) fd->v[i] = ga.v[i] - gb.v[i];
    *fd = fft2(*fd);
    auto s = std::make_shared<RGrid>(wfft_weights(h, w));

    double n = static_cast<double>(h * w);
    double acc = 0;
    for (size_t i = 0; i < fd->v.size(); ++i) acc += s->v[i] * std::norm(fd->v[i]);
    Tensor out({1});
    out[0] = acc / (n * n);

    return make_node(std::move(out), {a}, [a, fd, s, h, w, n](Node& nd) {
        CGrid t(h, w);
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] = s->v[i] * std::conj(fd->v[i]);
        CGrid bt = fft2(t);
        Tensor g(a->val.shape);
        double scale = 2.0 * nd.grad[0] / (n * n);
        for (size_t i = 0; i < g.size(); ++i) g[i] = scale * bt.v[i].real();
        accum(a, g);
    });
}

// phi -> |propagate(e^{i phi}, -d)| on the ROI as a differentiable node.
inline Var propagate_amplitude(const Var& phase, const OpticsConfig& config) {
    if (phase->val.shape.size() != 3 || phase->val.shape[0] != 1)
        throw ShapeError("propagate_amplitude: expected [1,H,W] phase");
    RGrid ph(phase->val.shape[1], phase->val.shape[2]);
    std::copy(phase->val.data.begin(), phase->val.data.end(), ph.v.begin());
    auto tape = std::make_shared<holocodec::detail::PhaseToAmplitudeTape>(
        holocodec::detail::phase_to_amplitude_forward(ph, config));
    Tensor out({1, tape->rh, tape->rw});
    std::copy(tape->amplitude.v.begin(), tape->amplitude.v.end(), out.data.begin());
    return make_node(std::move(out), {phase}, [phase, tape](Node& nd) {
        RGrid gbar(tape->rh, tape->rw);
        std::copy(nd.grad.data.begin(), nd.grad.data.end(), gbar.v.begin());
        RGrid gph = holocodec::detail::phase_to_amplitude_vjp(*tape, gbar);
        Tensor g(phase->val.shape);
        std::copy(gph.v.begin(), gph.v.end(), g.data.begin());
        accum(phase, g);
    });
}

// --- SSIM / MS-SSIM ---

inline Tensor gaussian_window(size_t win, double sigma) {
    Tensor k({1, 1, win, win});
    double s = 0;
    long c = static_cast<long>(win) / 2;
    for (size_t i = 0; i < win; ++i)
        for (size_t j = 0; j < win; ++j) {
            double dy = static_cast<double>(static_cast<long>(i) - c);
            double dx = static_cast<double>(static_cast<long>(j) - c);
            double v = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            k.data[i * win + j] = v;
            s += v;
        }
    for (double& v : k.data) v /= s;
    return k;
}

struct SsimTerms {
    Var luminance_cs;  // mean of l*cs map
    Var cs;            // mean of cs map
};

// One-scale SSIM terms with a `valid` Gaussian window.
inline SsimTerms ssim_terms(const Var& a, const Var& b, size_t win, double peak) {
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    Var kern = constant(gaussian_window(win, 1.5));
    auto blur = [&](const Var& x) { return conv2d(x, kern, nullptr, 1, 0); };

    Var mu1 = blur(a), mu2 = blur(b);
    Var mu1_sq = mul(mu1, mu1), mu2_sq = mul(mu2, mu2), mu1_mu2 = mul(mu1, mu2);
    Var s1 = sub(blur(mul(a, a)), mu1_sq);
    Var s2 = sub(blur(mul(b, b)), mu2_sq);
    Var s12 = sub(blur(mul(a, b)), mu1_mu2);

    Var l = divide(add_scalar(scale(mu1_mu2, 2.0), c1), add_scalar(add(mu1_sq, mu2_sq), c1));
    Var cs = divide(add_scalar(scale(s12, 2.0), c2), add_scalar(add(s1, s2), c2));
    return {mean(mul(l, cs)), mean(cs)};
}

inline const std::vector<double>& msssim_weights5() {
    static const std::vector<double> w{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    return w;
}

// Feasible (levels, window) for an image: the standard 11-tap window and up
// to five scales when geometry allows, fewer scales (and for very small
// inputs a narrower odd window) otherwise.
inline std::pair<size_t, size_t> msssim_geometry(size_t h, size_t w, size_t max_levels = 5) {
    size_t m = std::min(h, w);
    size_t win = 11;
    if (m < win) win = (m % 2 == 0) ? m - 1 : m;
    if (win < 3) throw ShapeError("image too small for SSIM window");
    size_t levels = 1;
    while (levels < max_levels && (m >> levels) >= win) ++levels;
    return {levels, win};
}

// Multi-scale SSIM: cs terms at every scale, luminance folded in at the
// coarsest, standard exponents renormalized to the number of scales.
inline Var ms_ssim_op(const Var& a0, const Var& b0, size_t levels, size_t win, double peak = 1.0) {
    std::vector<double> wts(msssim_weights5().begin(), msssim_weights5().begin() + static_cast<long>(levels));
    double sum_w = 0;
    for (double w : wts) sum_w += w;
    for (double& w : wts) w /= sum_w;

    Var a = a0, b = b0;
    Var prod;
    for (size_t l = 0; l < levels; ++l) {
        SsimTerms t = ssim_terms(a, b, win, peak);
        Var factor = l + 1 == levels ? t.luminance_cs : t.cs;
        // negative cs values are floored before the fractional power
        Var f = pow_floored(factor, wts[l], 1e-8);
        prod = prod ? mul(prod, f) : f;
        if (l + 1 < levels) {
            a = avg_pool2(a);
            b = avg_pool2(b);
        }
    }
    return prod;
}

inline Var ssim_op(const Var& a, const Var& b, size_t win = 11, double peak = 1.0) {
    return ssim_terms(a, b, win, peak).luminance_cs;
}

}  // namespace ag

// Composite reconstruction-vs-target weights.
struct LossWeights {
    double w_mse = 1.0;
    double w_msssim = 0.1;
    double w_wfft = 0.025;

    void validate() const {
        if (w_mse < 0 || w_msssim < 0 || w_wfft < 0) throw ConfigError("loss weights must be non-negative");
        if (w_mse == 0 && w_msssim == 0 && w_wfft == 0) throw ConfigError("at least one loss weight must be positive");
    }
};

namespace ag {

// w_mse * MSE + w_msssim * (1 - MS-SSIM) + w_wfft * WFFT between a
// reconstructed amplitude (Var) and a fixed target on the same grid.
inline Var amplitude_loss(const Var& recon, const Tensor& target, const LossWeights& w) {
    w.validate();
    if (!recon->val.same_shape(target)) throw ShapeError("amplitude_loss: target shape mismatch");
    Var tgt = constant(target);
    Var total;
    auto add_term = [&](Var term) { total = total ? add(total, term) : term; };
    if (w.w_mse > 0) add_term(scale(mse(recon, tgt), w.w_mse));
    if (w.w_msssim > 0) {
        auto [levels, win] = msssim_geometry(target.shape[1], target.shape[2]);
        Var ms = ms_ssim_op(recon, tgt, levels, win);
        add_term(scale(add_scalar(scale(ms, -1.0), 1.0), w.w_msssim));
    }
    if (w.w_wfft > 0) add_term(scale(wfft_loss(recon, target), w.w_wfft));
    return total;
}

// Full reconstruction loss of a phase map against the target amplitude:
// differentiable through the ASM propagation.
inline Var reconstruction_loss_op(const Var& phase, const AmplitudeMap& target, const OpticsConfig& config,
                                  const LossWeights& w) {
    auto [rh, rw] = config.roi_for(phase->val.shape[1], phase->val.shape[2]);
    RGrid tgt = target.data;
    if (tgt.h != rh || tgt.w != rw) {
        if (tgt.h == phase->val.shape[1] && tgt.w == phase->val.shape[2])
            tgt = crop_center(tgt, rh, rw);
        else
            throw ShapeError("reconstruction_loss: target does not match roi");
    }
    Tensor t({1, rh, rw});
    std::copy(tgt.v.begin(), tgt.v.end(), t.data.begin());
    Var amp = propagate_amplitude(phase, config);
    return amplitude_loss(amp, t, w);
}

}  // namespace ag

// Non-differentiable convenience: the composite loss as a plain number.
inline double reconstruction_loss(const PhaseMap& phase, const AmplitudeMap& target, const OpticsConfig& config,
                                  const LossWeights& w) {
    Tensor ph({1, phase.data.h, phase.data.w});
    std::copy(phase.data.v.begin(), phase.data.v.end(), ph.data.begin());
    return ag::reconstruction_loss_op(ag::constant(std::move(ph)), target, config, w)->val[0];
}

}  // namespace holocodec

#endif
