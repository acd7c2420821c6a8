#ifndef HOLOCODEC_RETRIEVAL_HPP
#define HOLOCODEC_RETRIEVAL_HPP

#include <optional>

#include "holocodec/losses.hpp"
#include "holocodec/optics.hpp"

namespace holocodec {

struct RetrievalSettings {
    enum class Init { RandomUniform, Zeros, Provided };

    size_t iterations = 100;
    double step_size = 0.1;  // gradient variant only
    Init init = Init::RandomUniform;
    PhaseMap provided;  // used when init == Provided
    uint64_t seed = 0;

    void validate() const {
        if (!(step_size > 0)) throw ConfigError("step_size must be positive");
    }
};

namespace detail {

inline RGrid initial_phase(size_t h, size_t w, const RetrievalSettings& s) {
    switch (s.init) {
        case RetrievalSettings::Init::Zeros:
            return RGrid(h, w, 0.0);
        case RetrievalSettings::Init::Provided:
            if (s.provided.data.h != h || s.provided.data.w != w)
                throw ShapeError("provided initial phase has wrong extent");
            return s.provided.data;
        case RetrievalSettings::Init::RandomUniform:
        default: {
            Rng rng(s.seed);
            std::uniform_real_distribution<double> u(-kPi, kPi);
            RGrid g(h, w);
            for (double& x : g.v) x = wrap_phase(u(rng));
            return g;
        }
    }
}

}  // namespace detail

// Gerchberg-Saxton alternating projections between the hologram plane
// (unit amplitude on the frame, zero outside) and the object plane
// (target amplitude). The whole loop runs on the padded grid so each step is
// a true projection; error_trace, when given, receives the object-plane
// amplitude error before each projection.
inline PhaseMap gerchberg_saxton(const AmplitudeMap& target, const OpticsConfig& config,
                                 const RetrievalSettings& settings, std::vector<double>* error_trace = nullptr) {
    config.validate();
    settings.validate();
    target.validate();
    const size_t h = target.data.h, w = target.data.w;
    const size_t ph = config.padded(h), pw = config.padded(w);
    const size_t oy = (ph - h) / 2, ox = (pw - w) / 2;

    RGrid phase = detail::initial_phase(h, w, settings);
    if (settings.iterations == 0) {
        for (double& x : phase.v) x = wrap_phase(x);
        return PhaseMap{std::move(phase)};
    }

    CGrid kern_back = asm_kernel(ph, pw, config, -config.distance);
    CGrid kern_fwd = asm_kernel(ph, pw, config, config.distance);
    RGrid target_pad = pad_center(target.data, ph, pw);

    // hologram-plane field: unit amplitude inside the frame, zero outside
    CGrid holo(ph, pw);
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            holo.at(y + oy, x + ox) = std::complex<double>(std::cos(phase.at(y, x)), std::sin(phase.at(y, x)));

    auto apply_kernel = [&](const CGrid& f, const CGrid& k) {
        CGrid spec = fft2(f);
        for (size_t i = 0; i < spec.v.size(); ++i) spec.v[i] *= k.v[i];
        return ifft2(spec);
    };

    for (size_t it = 0; it < settings.iterations; ++it) {
        CGrid obj = apply_kernel(holo, kern_back);
        if (error_trace) {
            double err = 0;
            for (size_t i = 0; i < obj.v.size(); ++i) {
                double t = std::abs(obj.v[i]) - target_pad.v[i];
                err += t * t;
            }
            error_trace->push_back(std::sqrt(err));
        }
        // object-plane projection: keep phase, impose target amplitude
        for (size_t i = 0; i < obj.v.size(); ++i) {
            double m = std::abs(obj.v[i]);
            obj.v[i] = m > 0 ? obj.v[i] * (target_pad.v[i] / m)
                             : std::complex<double>(target_pad.v[i], 0.0);
        }
        holo = apply_kernel(obj, kern_fwd);
        // hologram-plane projection: phase-only on the frame, dark outside
        for (size_t y = 0; y < ph; ++y)
            for (size_t x = 0; x < pw; ++x) {
                bool inside = y >= oy && y < oy + h && x >= ox && x < ox + w;
                if (!inside) {
                    holo.at(y, x) = 0.0;
                } else {
                    double m = std::abs(holo.at(y, x));
                    holo.at(y, x) = m > 0 ? holo.at(y, x) / m : std::complex<double>(1.0, 0.0);
                }
            }
    }

    RGrid out(h, w);
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) out.at(y, x) = wrap_phase(std::arg(holo.at(y + oy, x + ox)));
    return PhaseMap{std::move(out)};
}

// First-order descent on MSE(|f_p^{-d}(phi, 1)| on roi, target) with the
// analytic adjoint gradient. Deterministic given the seed.
inline PhaseMap sgd_phase_retrieval(const AmplitudeMap& target, const OpticsConfig& config,
                                    const RetrievalSettings& settings, std::vector<double>* loss_trace = nullptr) {
    config.validate();
    settings.validate();
    target.validate();
    const size_t h = target.data.h, w = target.data.w;
    auto [rh, rw] = config.roi_for(h, w);
    RGrid target_roi = target.data.h == rh && target.data.w == rw ? target.data : crop_center(target.data, rh, rw);

    RGrid phase = detail::initial_phase(h, w, settings);
    for (double& x : phase.v) x = wrap_phase(x);

    const double inv_n = 1.0 / static_cast<double>(rh * rw);
    for (size_t it = 0; it < settings.iterations; ++it) {
        auto tape = detail::phase_to_amplitude_forward(phase, config);
        double loss = 0;
        RGrid gbar(rh, rw);
        for (size_t i = 0; i < gbar.v.size(); ++i) {
            double diff = tape.amplitude.v[i] - target_roi.v[i];
            loss += diff * diff;
            gbar.v[i] = 2.0 * diff * inv_n;
        }
        loss *= inv_n;
        if (!std::isfinite(loss))
            throw NumericError("sgd_phase_retrieval diverged at iteration " + std::to_string(it));
        if (loss_trace) loss_trace->push_back(loss);

        RGrid grad = detail::phase_to_amplitude_vjp(tape, gbar);
        bool finite = true;
        for (size_t i = 0; i < phase.v.size(); ++i) {
            phase.v[i] = wrap_phase(phase.v[i] - settings.step_size * grad.v[i]);
            finite = finite && std::isfinite(phase.v[i]);
        }
        if (!finite)
            throw NumericError("sgd_phase_retrieval diverged at iteration " + std::to_string(it));
    }
    return PhaseMap{std::move(phase)};
}

}  // namespace holocodec

#endif
