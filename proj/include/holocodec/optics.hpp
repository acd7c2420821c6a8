#ifndef HOLOCODEC_OPTICS_HPP
#define HOLOCODEC_OPTICS_HPP

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>

#include <fftw3.h>

#include "holocodec/common.hpp"
#include "holocodec/grid.hpp"

namespace holocodec {

// Physical setup of one wavelength channel. Distances are signed: positive
// distance propagates object -> hologram plane.
//
// Frequency layout: DC-centered sampling f_k = k' / (N * pitch) with
// k' = k for k < (N+1)/2 and k' = k - N otherwise, stored corner-origin
// (zero frequency at bin 0, matching the unshifted FFT). This is the one
// layout used everywhere; kernels are reproducible bit for bit.
struct OpticsConfig {
    double wavelength = 520e-9;  // meters
    double pixel_pitch = 6.4e-6; // meters
    double distance = 0.20;      // meters, object -> hologram
    double pad_factor = 2.0;     // >= 1; FFT grid is pad_factor * extent
    size_t roi_h = 0, roi_w = 0; // 0 = full frame

    void validate() const {
        if (!(wavelength > 0)) throw ConfigError("wavelength must be positive");
        if (!(pixel_pitch > 0)) throw ConfigError("pixel pitch must be positive");
        if (!(pad_factor >= 1.0)) throw ConfigError("pad_factor must be >= 1");
        if (!std::isfinite(distance)) throw ConfigError("distance must be finite");
    }

    size_t padded(size_t n) const {
        return std::max(n, static_cast<size_t>(std::llround(static_cast<double>(n) * pad_factor)));
    }

    // ROI resolved against a concrete frame. Throws if it does not fit.
    std::pair<size_t, size_t> roi_for(size_t h, size_t w) const {
        size_t rh = roi_h == 0 ? h : roi_h;
        size_t rw = roi_w == 0 ? w : roi_w;
        if (rh > h || rw > w) throw ConfigError("roi exceeds frame extent");
        return {rh, rw};
    }
};

struct ComplexField {
    CGrid data;
    OpticsConfig config;
};

// H x W phase map, every sample in (-pi, pi].
struct PhaseMap {
    RGrid data;

    void validate() const {
        for (double x : data.v)
            if (!(x > -kPi && x <= kPi)) throw DomainError("phase sample outside (-pi, pi]");
    }
};

// H x W non-negative amplitude map.
struct AmplitudeMap {
    RGrid data;

    void validate() const {
        for (double x : data.v)
            if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("amplitude sample negative or non-finite");
    }
};

namespace detail {

// Cached FFTW plans, one per (h, w, sign). Plans are created with
// FFTW_UNALIGNED so they execute on arbitrary buffers; creation is
// serialized, execution is thread-safe.
class FftPlans {
public:
    static FftPlans& instance() {
        static FftPlans p;
        return p;
    }

    fftw_plan get(int h, int w, int sign) {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_tuple(h, w, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<std::complex<double>> a(static_cast<size_t>(h) * w), b(a.size());
        fftw_plan p = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(a.data()),
                                       reinterpret_cast<fftw_complex*>(b.data()), sign,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, p);
        return p;
    }

private:
    FftPlans() = default;
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

}  // namespace detail

// Unnormalized forward 2D DFT.
inline CGrid fft2(const CGrid& in) {
    CGrid out(in.h, in.w);
    fftw_plan p = detail::FftPlans::instance().get(static_cast<int>(in.h), static_cast<int>(in.w), FFTW_FORWARD);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.v.data())),
                     reinterpret_cast<fftw_complex*>(out.v.data()));
    return out;
}

// Inverse 2D DFT scaled by 1/(h*w), so ifft2(fft2(x)) == x.
inline CGrid ifft2(const CGrid& in) {
    CGrid out(in.h, in.w);
    fftw_plan p = detail::FftPlans::instance().get(static_cast<int>(in.h), static_cast<int>(in.w), FFTW_BACKWARD);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.v.data())),
                     reinterpret_cast<fftw_complex*>(out.v.data()));
    double s = 1.0 / static_cast<double>(in.h * in.w);
    for (auto& z : out.v) z *= s;
    return out;
}

// Frequency of bin k on an N-point grid with the layout declared above.
inline double fft_freq(size_t k, size_t n, double pitch) {
    auto ki = static_cast<long long>(k);
    if (k >= (n + 1) / 2) ki -= static_cast<long long>(n);
    return static_cast<double>(ki) / (static_cast<double>(n) * pitch);
}

// Band-limited angular-spectrum transfer kernel on an h x w padded grid:
// exp(i 2 pi d / lambda * sqrt(1 - (lambda fx)^2 - (lambda fy)^2)) inside
// fx^2 + fy^2 < 1/lambda^2, exactly zero outside.
inline CGrid asm_kernel(size_t h, size_t w, const OpticsConfig& config, double distance) {
    config.validate();
    if (h == 0 || w == 0) throw ShapeError("asm_kernel: empty grid");
    CGrid kern(h, w);
    const double lam = config.wavelength;
    const double inv_lam2 = 1.0 / (lam * lam);
    const double phase_scale = kTwoPi * distance / lam;
    for (size_t y = 0; y < h; ++y) {
        double fy = fft_freq(y, h, config.pixel_pitch);
        for (size_t x = 0; x < w; ++x) {
            double fx = fft_freq(x, w, config.pixel_pitch);
            double f2 = fx * fx + fy * fy;
            if (f2 < inv_lam2) {
                double arg = 1.0 - lam * lam * f2;
                double ph = phase_scale * std::sqrt(arg);
                kern.at(y, x) = std::complex<double>(std::cos(ph), std::sin(ph));
            } else {
                kern.at(y, x) = 0.0;
            }
        }
    }
    return kern;
}

// Free-space propagation over a signed distance: zero-pad to the configured
// factor, multiply the spectrum with the ASM kernel, crop back.
inline ComplexField propagate(const ComplexField& field, double distance) {
    field.config.validate();
    if (field.data.h == 0 || field.data.w == 0) throw ShapeError("propagate: empty field");
    if (!all_finite(field.data)) throw DomainError("propagate: non-finite field sample");

    size_t ph = field.config.padded(field.data.h);
    size_t pw = field.config.padded(field.data.w);
    CGrid padded = pad_center(field.data, ph, pw);
    CGrid spec = fft2(padded);
    CGrid kern = asm_kernel(ph, pw, field.config, distance);
    for (size_t i = 0; i < spec.v.size(); ++i) spec.v[i] *= kern.v[i];
    CGrid out = ifft2(spec);
    return {crop_center(out, field.data.h, field.data.w), field.config};
}

// sqrt(image^gamma): undoes camera gamma, then square-root maps intensity to amplitude.
inline AmplitudeMap amplitude_from_intensity(const RGrid& image, double gamma) {
    if (!(gamma > 0)) throw ConfigError("gamma must be positive");
    AmplitudeMap out{RGrid(image.h, image.w)};
    for (size_t i = 0; i < image.v.size(); ++i) {
        double p = image.v[i];
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("intensity sample outside [0, 1]");
        out.data.v[i] = std::pow(p, gamma * 0.5);
    }
    return out;
}

namespace detail {

// Forward pass of phi -> |propagate(e^{i phi}, -d)| cropped to the ROI, with
// enough state kept to evaluate the vector-Jacobian product. The adjoint of
// the linear chain crop . ifft . diag(H) . fft . pad is
// crop . fft-normalized-inverse-as-transpose . diag(H) . fft . embed; the DFT
// matrix is symmetric so transposes stay FFTs.
struct PhaseToAmplitudeTape {
    size_t h = 0, w = 0;       // phase extent
    size_t ph = 0, pw = 0;     // padded extent
    size_t rh = 0, rw = 0;     // roi extent
    CGrid u;                   // e^{i phi}
    CGrid v_roi;               // propagated field on roi
    CGrid kern;
    RGrid amplitude;
};

inline PhaseToAmplitudeTape phase_to_amplitude_forward(const RGrid& phase, const OpticsConfig& config) {
    config.validate();
    if (!all_finite(phase)) throw DomainError("phase map has non-finite sample");
    PhaseToAmplitudeTape t;
    t.h = phase.h;
    t.w = phase.w;
    t.ph = config.padded(t.h);
    t.pw = config.padded(t.w);
    auto [rh, rw] = config.roi_for(t.h, t.w);
    t.rh = rh;
    t.rw = rw;

    t.u = CGrid(t.h, t.w);
    for (size_t i = 0; i < phase.v.size(); ++i)
        t.u.v[i] = std::complex<double>(std::cos(phase.v[i]), std::sin(phase.v[i]));

    t.kern = asm_kernel(t.ph, t.pw, config, -config.distance);
    CGrid spec = fft2(pad_center(t.u, t.ph, t.pw));
    for (size_t i = 0; i < spec.v.size(); ++i) spec.v[i] *= t.kern.v[i];
    CGrid out = ifft2(spec);
    t.v_roi = crop_center(out, t.rh, t.rw);

    t.amplitude = RGrid(t.rh, t.rw);
    for (size_t i = 0; i < t.v_roi.v.size(); ++i) t.amplitude.v[i] = std::abs(t.v_roi.v[i]);
    return t;
}

// Given dLoss/dAmplitude on the ROI, returns dLoss/dPhase.
inline RGrid phase_to_amplitude_vjp(const PhaseToAmplitudeTape& t, const RGrid& gbar) {
    if (gbar.h != t.rh || gbar.w != t.rw) throw ShapeError("vjp cotangent shape mismatch");

    CGrid s(t.rh, t.rw);
    for (size_t i = 0; i < s.v.size(); ++i) {
        double a = t.amplitude.v[i];
        s.v[i] = a > 0 ? gbar.v[i] * std::conj(t.v_roi.v[i]) / a : 0.0;
    }
    // Transpose of the propagation chain.
    CGrid spec = ifft2(embed_center(s, t.ph, t.pw));
    for (size_t i = 0; i < spec.v.size(); ++i) spec.v[i] *= t.kern.v[i];
    CGrid back = crop_center(fft2(spec), t.h, t.w);

    RGrid gphase(t.h, t.w);
    for (size_t i = 0; i < gphase.v.size(); ++i) {
        std::complex<double> iu(-t.u.v[i].imag(), t.u.v[i].real());  // i * u
        gphase.v[i] = (iu * back.v[i]).real();
    }
    return gphase;
}

}  // namespace detail

// |propagate(unit-amplitude e^{i phi}, -d)| on the configured ROI.
inline AmplitudeMap reconstruct_amplitude(const PhaseMap& phase, const OpticsConfig& config) {
    auto tape = detail::phase_to_amplitude_forward(phase.data, config);
    return AmplitudeMap{std::move(tape.amplitude)};
}

}  // namespace holocodec

#endif
