#ifndef HOLOCODEC_METRICS_HPP
#define HOLOCODEC_METRICS_HPP

#include <array>
#include <fstream>
#include <iostream>
#include <sstream>

#include "holocodec/losses.hpp"

namespace holocodec {

// Cap applied when writing PSNR into CSV / RD curves (identical inputs are +inf).
inline constexpr double kPsnrCap = 120.0;

inline double psnr(const RGrid& a, const RGrid& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
    if (!(peak > 0)) throw ConfigError("psnr: peak must be positive");
    double mse = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        double t = a.v[i] - b.v[i];
        mse += t * t;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

inline double ssim(const RGrid& a, const RGrid& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
    if (std::min(a.h, a.w) < 11) throw ShapeError("ssim: image smaller than the 11-tap window");
    Tensor ta({1, a.h, a.w}), tb({1, b.h, b.w});
    std::copy(a.v.begin(), a.v.end(), ta.data.begin());
    std::copy(b.v.begin(), b.v.end(), tb.data.begin());
    return ag::ssim_op(ag::constant(std::move(ta)), ag::constant(std::move(tb)), 11, peak)->val[0];
}

inline double ms_ssim(const RGrid& a, const RGrid& b, size_t levels = 5, double peak = 1.0) {
    if (!a.same_shape(b)) throw ShapeError("ms_ssim: shape mismatch");
    if (levels < 1 || levels > 5) throw ConfigError("ms_ssim: levels must be in [1, 5]");
    if ((std::min(a.h, a.w) >> (levels - 1)) < 11)
        throw ShapeError("ms_ssim: image too small for " + std::to_string(levels) + " scales");
    Tensor ta({1, a.h, a.w}), tb({1, b.h, b.w});
    std::copy(a.v.begin(), a.v.end(), ta.data.begin());
    std::copy(b.v.begin(), b.v.end(), tb.data.begin());
    return ag::ms_ssim_op(ag::constant(std::move(ta)), ag::constant(std::move(tb)), levels, 11, peak)->val[0];
}

// Rate-distortion curve: (bits per pixel, quality) points, bpp strictly increasing.
struct RDCurve {
    std::vector<std::pair<double, double>> points;

    void validate() const {
        if (points.size() < 3) throw ConfigError("RD curve needs at least 3 points");
        for (size_t i = 0; i < points.size(); ++i) {
            if (!(points[i].first > 0) || !std::isfinite(points[i].second))
                throw ConfigError("RD curve points must have positive rate and finite quality");
            if (i > 0 && !(points[i].first > points[i - 1].first))
                throw ConfigError("RD curve bpp must be strictly increasing");
        }
    }
};

namespace detail {

// Least-squares polynomial fit of degree min(3, n-1), x centered for conditioning.
struct PolyFit {
    double x0 = 0;
    std::array<double, 4> c{};  // c0 + c1 t + c2 t^2 + c3 t^3, t = x - x0
    size_t degree = 0;

    double eval(double x) const {
        double t = x - x0, acc = 0, p = 1;
        for (size_t i = 0; i <= degree; ++i) {
            acc += c[i] * p;
            p *= t;
        }
        return acc;
    }
    // definite integral over [a, b]
    double integral(double a, double b) const {
        auto anti = [&](double x) {
            double t = x - x0, acc = 0, p = t;
            for (size_t i = 0; i <= degree; ++i) {
                acc += c[i] * p / static_cast<double>(i + 1);
                p *= t;
            }
            return acc;
        };
        return anti(b) - anti(a);
    }
};

inline PolyFit polyfit(const std::vector<double>& xs, const std::vector<double>& ys) {
    const size_t n = xs.size();
    PolyFit fit;
    fit.degree = std::min<size_t>(3, n - 1);
    fit.x0 = 0;
    for (double x : xs) fit.x0 += x;
    fit.x0 /= static_cast<double>(n);

    const size_t m = fit.degree + 1;
    double A[4][5] = {};  // normal equations, augmented
    for (size_t s = 0; s < n; ++s) {
        double t = xs[s] - fit.x0;
        double pow_t[7] = {1, 0, 0, 0, 0, 0, 0};
        for (size_t i = 1; i < 2 * m - 1; ++i) pow_t[i] = pow_t[i - 1] * t;
        for (size_t r = 0; r < m; ++r) {
            for (size_t cdx = 0; cdx < m; ++cdx) A[r][cdx] += pow_t[r + cdx];
            A[r][m] += pow_t[r] * ys[s];
        }
    }
    // Gaussian elimination with partial pivoting
    for (size_t col = 0; col < m; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < m; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        for (size_t cdx = 0; cdx <= m; ++cdx) std::swap(A[col][cdx], A[piv][cdx]);
        if (A[col][col] == 0) throw NumericError("polyfit: singular system");
        for (size_t r = 0; r < m; ++r) {
            if (r == col) continue;
            double f = A[r][col] / A[col][col];
            for (size_t cdx = col; cdx <= m; ++cdx) A[r][cdx] -= f * A[col][cdx];
        }
    }
    for (size_t i = 0; i < m; ++i) fit.c[i] = A[i][m] / A[i][i];
    return fit;
}

struct BdPrep {
    PolyFit anchor, test;
    double lo = 0, hi = 0;
};

inline BdPrep bd_prepare(const RDCurve& a, const RDCurve& t, bool rate_on_y, bool* overlap_warning) {
    a.validate();
    t.validate();
    auto extract = [&](const RDCurve& c, std::vector<double>& xs, std::vector<double>& ys) {
        for (auto [bpp, q] : c.points) {
            double lr = std::log10(bpp);
            xs.push_back(rate_on_y ? q : lr);
            ys.push_back(rate_on_y ? lr : q);
        }
    };
    std::vector<double> ax, ay, tx, ty;
    extract(a, ax, ay);
    extract(t, tx, ty);
    auto span = [](const std::vector<double>& v) {
        return std::pair{*std::min_element(v.begin(), v.end()), *std::max_element(v.begin(), v.end())};
    };
    auto [alo, ahi] = span(ax);
    auto [tlo, thi] = span(tx);
    double lo = std::max(alo, tlo), hi = std::min(ahi, thi);
    if (!(hi > lo)) throw RangeError("bd metric: curves do not overlap");
    bool warn = (hi - lo) < 0.5 * std::max(ahi - alo, thi - tlo);
    if (overlap_warning) *overlap_warning = warn;
    else if (warn)
        std::cerr << "bd metric: overlap covers less than half of a curve span\n";
    return {polyfit(ax, ay), polyfit(tx, ty), lo, hi};
}

}  // namespace detail

// Average rate delta at equal quality, in percent; negative means the test
// curve spends fewer bits than the anchor.
inline double bd_rate(const RDCurve& anchor, const RDCurve& test, bool* overlap_warning = nullptr) {
    auto p = detail::bd_prepare(anchor, test, /*rate_on_y=*/true, overlap_warning);
    double avg = (p.test.integral(p.lo, p.hi) - p.anchor.integral(p.lo, p.hi)) / (p.hi - p.lo);
    return (std::pow(10.0, avg) - 1.0) * 100.0;
}

// Average quality delta at equal rate, in the quality metric's unit (dB for PSNR).
inline double bd_psnr(const RDCurve& anchor, const RDCurve& test, bool* overlap_warning = nullptr) {
    auto p = detail::bd_prepare(anchor, test, /*rate_on_y=*/false, overlap_warning);
    return (p.test.integral(p.lo, p.hi) - p.anchor.integral(p.lo, p.hi)) / (p.hi - p.lo);
}

// --- RD curve CSV (bpp,quality) ---

inline std::string rdcurve_to_csv(const RDCurve& c) {
    std::ostringstream os;
    os.precision(17);
    os << "bpp,quality\n";
    for (auto [bpp, q] : c.points) os << bpp << "," << q << "\n";
    return os.str();
}

inline RDCurve rdcurve_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "bpp,quality") throw IoError("rd csv: bad header");
    RDCurve c;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError("rd csv: bad row");
        c.points.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    }
    return c;
}

}  // namespace holocodec

#endif
