#include <catch2/catch_amalgamated.hpp>

#include "holocodec/optics.hpp"
#include "test_helpers.hpp"

using namespace holocodec;
using holotest::band_limit;
using holotest::max_rel_error;
using holotest::random_field;
using holotest::random_phase;

namespace {

OpticsConfig desk_config(double pad = 1.0) {
    OpticsConfig c;
    c.wavelength = 520e-9;
    c.pixel_pitch = 6.4e-6;
    c.distance = 0.20;
    c.pad_factor = pad;
    return c;
}

// Nonphysical config whose grid holds frequencies beyond the 1/lambda cutoff,
// so the band limit actually bites.
OpticsConfig cutoff_config() {
    OpticsConfig c;
    c.wavelength = 2.0;
    c.pixel_pitch = 1.0;
    c.distance = 3.0;
    c.pad_factor = 1.0;
    return c;
}

}  // namespace

TEST_CASE("asm kernel at d=0 is the band-limit indicator") {
    auto cfg = cutoff_config();
    CGrid k = asm_kernel(16, 16, cfg, 0.0);
    double inv_lam2 = 1.0 / (cfg.wavelength * cfg.wavelength);
    for (size_t y = 0; y < 16; ++y)
        for (size_t x = 0; x < 16; ++x) {
            double fy = fft_freq(y, 16, cfg.pixel_pitch);
            double fx = fft_freq(x, 16, cfg.pixel_pitch);
            if (fx * fx + fy * fy < inv_lam2) {
                REQUIRE(k.at(y, x) == std::complex<double>(1.0, 0.0));
            } else {
                REQUIRE(k.at(y, x) == std::complex<double>(0.0, 0.0));
            }
        }
}

TEST_CASE("asm kernel is exactly zero past the cutoff and unimodular in band") {
    auto cfg = cutoff_config();
    CGrid k = asm_kernel(32, 48, cfg, cfg.distance);
    double inv_lam2 = 1.0 / (cfg.wavelength * cfg.wavelength);
    size_t zeroed = 0;
    for (size_t y = 0; y < k.h; ++y)
        for (size_t x = 0; x < k.w; ++x) {
            double fy = fft_freq(y, k.h, cfg.pixel_pitch);
            double fx = fft_freq(x, k.w, cfg.pixel_pitch);
            if (fx * fx + fy * fy >= inv_lam2) {
                REQUIRE(k.at(y, x).real() == 0.0);
                REQUIRE(k.at(y, x).imag() == 0.0);
                ++zeroed;
            } else {
                REQUIRE(std::abs(std::abs(k.at(y, x)) - 1.0) < 1e-12);
            }
        }
    REQUIRE(zeroed > 0);  // the config must actually exercise the cutoff
}

TEST_CASE("asm kernel DC bin carries exp(i 2 pi d / lambda)") {
    auto cfg = desk_config();
    CGrid k = asm_kernel(64, 64, cfg, cfg.distance);
    double arg = kTwoPi * cfg.distance / cfg.wavelength;
    std::complex<double> want(std::cos(arg), std::sin(arg));
    REQUIRE(std::abs(k.at(0, 0) - want) < 1e-12);
}

TEST_CASE("asm kernel rejects invalid configs") {
    OpticsConfig bad = desk_config();
    bad.wavelength = 0.0;
    REQUIRE_THROWS_AS(asm_kernel(8, 8, bad, 0.1), ConfigError);
    bad = desk_config();
    bad.pixel_pitch = -1.0;
    REQUIRE_THROWS_AS(asm_kernel(8, 8, bad, 0.1), ConfigError);
}

TEST_CASE("propagation at zero distance is the identity for band-limited fields") {
    Rng rng(7);
    auto cfg = desk_config();
    ComplexField f{band_limit(random_field(32, 32, rng), cfg), cfg};
    ComplexField out = propagate(f, 0.0);
    REQUIRE(max_rel_error(out.data, f.data) < 1e-10);
}

TEST_CASE("forward/backward propagation round-trips") {
    Rng rng(11);
    auto cfg = desk_config();
    ComplexField f{random_field(64, 64, rng), cfg};
    ComplexField back = propagate(propagate(f, cfg.distance), -cfg.distance);
    REQUIRE(max_rel_error(back.data, f.data) < 1e-6);
}

TEST_CASE("uniform field picks up the DC kernel phase") {
    auto cfg = desk_config();
    ComplexField f{CGrid(16, 16, std::complex<double>(1.0, 0.0)), cfg};
    ComplexField out = propagate(f, cfg.distance);
    double arg = kTwoPi * cfg.distance / cfg.wavelength;  // Eq. of the kernel at fx = fy = 0
    std::complex<double> want(std::cos(arg), std::sin(arg));
    for (const auto& z : out.data.v) REQUIRE(std::abs(z - want) < 1e-9);
}

TEST_CASE("propagation rejects non-finite fields") {
    auto cfg = desk_config();
    CGrid g(8, 8, std::complex<double>(1.0, 0.0));
    g.at(3, 3) = std::complex<double>(std::nan(""), 0.0);
    REQUIRE_THROWS_AS(propagate({g, cfg}, 0.1), DomainError);
}

TEST_CASE("propagation conserves energy on band-limited fields") {
    Rng rng(3);
    auto cfg = desk_config();
    for (int t = 0; t < 20; ++t) {
        ComplexField f{random_field(48, 48, rng), cfg};
        double before = norm_l2(f.data);
        double after = norm_l2(propagate(f, cfg.distance).data);
        REQUIRE(std::abs(after - before) / before < 1e-9);
    }
    // and with a biting cutoff, after projecting onto the band
    auto cc = cutoff_config();
    for (int t = 0; t < 20; ++t) {
        ComplexField f{band_limit(random_field(32, 32, rng), cc), cc};
        double before = norm_l2(f.data);
        double after = norm_l2(propagate(f, cc.distance).data);
        REQUIRE(std::abs(after - before) / before < 1e-9);
    }
}

TEST_CASE("propagation composes over distances") {
    Rng rng(5);
    auto cfg = desk_config();
    ComplexField f{random_field(32, 32, rng), cfg};
    double d1 = 0.07, d2 = 0.13;
    ComplexField two_step = propagate(propagate(f, d1), d2);
    ComplexField one_step = propagate(f, d1 + d2);
    REQUIRE(max_rel_error(two_step.data, one_step.data) < 1e-6);
}

TEST_CASE("band-limit projection is idempotent") {
    Rng rng(13);
    auto cfg = cutoff_config();
    ComplexField f{random_field(24, 24, rng), cfg};
    ComplexField once = propagate(f, 0.0);
    ComplexField twice = propagate(once, 0.0);
    REQUIRE(max_rel_error(twice.data, once.data) < 1e-12);
}

TEST_CASE("propagation is deterministic") {
    Rng rng(17);
    auto cfg = desk_config(2.0);
    ComplexField f{random_field(40, 40, rng), cfg};
    ComplexField a = propagate(f, cfg.distance);
    ComplexField b = propagate(f, cfg.distance);
    REQUIRE(a.data == b.data);
}

TEST_CASE("amplitude mapping applies inverse gamma then square root") {
    RGrid img(1, 3);
    img.at(0, 0) = 1.0;
    img.at(0, 1) = 0.0;
    img.at(0, 2) = 0.25;
    auto amp22 = amplitude_from_intensity(img, 2.2);
    REQUIRE(amp22.data.at(0, 0) == Catch::Approx(1.0));
    REQUIRE(amp22.data.at(0, 1) == 0.0);
    auto amp1 = amplitude_from_intensity(img, 1.0);
    REQUIRE(amp1.data.at(0, 2) == Catch::Approx(0.5));

    RGrid bad(1, 1);
    bad.at(0, 0) = 1.5;
    REQUIRE_THROWS_AS(amplitude_from_intensity(bad, 2.2), DomainError);
    REQUIRE_THROWS_AS(amplitude_from_intensity(img, 0.0), ConfigError);
}

TEST_CASE("reconstruction at d=0 of any phase is unit amplitude") {
    Rng rng(23);
    auto cfg = desk_config();
    cfg.distance = 0.0;
    cfg.roi_h = 12;
    cfg.roi_w = 20;
    PhaseMap ph{random_phase(24, 40, rng)};
    AmplitudeMap amp = reconstruct_amplitude(ph, cfg);
    REQUIRE(amp.data.h == 12);
    REQUIRE(amp.data.w == 20);
    for (double a : amp.data.v) REQUIRE(a == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("reconstruction matches a direct spectral oracle") {
    Rng rng(29);
    auto cfg = desk_config(1.0);
    PhaseMap ph{random_phase(32, 32, rng)};
    AmplitudeMap amp = reconstruct_amplitude(ph, cfg);

    // oracle: direct spectral multiplication on the same grid
    CGrid u(32, 32);
    for (size_t i = 0; i < u.v.size(); ++i)
        u.v[i] = std::complex<double>(std::cos(ph.data.v[i]), std::sin(ph.data.v[i]));
    CGrid spec = fft2(u);
    CGrid kern = asm_kernel(32, 32, cfg, -cfg.distance);
    for (size_t i = 0; i < spec.v.size(); ++i) spec.v[i] *= kern.v[i];
    CGrid field = ifft2(spec);
    RGrid want(32, 32);
    for (size_t i = 0; i < field.v.size(); ++i) want.v[i] = std::abs(field.v[i]);

    REQUIRE(max_rel_error(amp.data, want) < 1e-6);
}

TEST_CASE("reconstruction rejects non-finite phase") {
    auto cfg = desk_config();
    RGrid g(8, 8, 0.0);
    g.at(0, 0) = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(reconstruct_amplitude(PhaseMap{g}, cfg), DomainError);
}

TEST_CASE("wrap_phase lands in (-pi, pi]") {
    REQUIRE(wrap_phase(kPi) == Catch::Approx(kPi));
    REQUIRE(wrap_phase(-kPi) == Catch::Approx(kPi));
    REQUIRE(wrap_phase(3 * kPi) == Catch::Approx(kPi));
    REQUIRE(wrap_phase(0.5) == Catch::Approx(0.5));
    for (double x : {-100.0, -3.2, 7.9, 1234.5}) {
        double y = wrap_phase(x);
        REQUIRE(y > -kPi);
        REQUIRE(y <= kPi);
    }
}
