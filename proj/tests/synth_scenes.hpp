#ifndef HOLOCODEC_SYNTH_SCENES_HPP
#define HOLOCODEC_SYNTH_SCENES_HPP

#include <array>

#include "holocodec/grid.hpp"

namespace holotest {

// Desk-scale stand-in corpus: gaussian blobs over a gradient background.
inline holocodec::RGrid synth_scene(size_t h, size_t w, uint64_t seed) {
    holocodec::Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    holocodec::RGrid img(h, w);
    double gx = u(rng) - 0.5, gy = u(rng) - 0.5, base = 0.3 + 0.4 * u(rng);
    int nblobs = 3 + static_cast<int>(u(rng) * 4);
    std::vector<std::array<double, 4>> blobs;
    for (int b = 0; b < nblobs; ++b)
        blobs.push_back({u(rng) * static_cast<double>(h), u(rng) * static_cast<double>(w),
                         (0.05 + 0.15 * u(rng)) * static_cast<double>(h), u(rng) - 0.3});
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) {
            double v = base + gx * (static_cast<double>(x) / static_cast<double>(w) - 0.5) +
                       gy * (static_cast<double>(y) / static_cast<double>(h) - 0.5);
            for (auto& b : blobs) {
                double dy = static_cast<double>(y) - b[0], dx = static_cast<double>(x) - b[1];
                v += b[3] * std::exp(-(dy * dy + dx * dx) / (2 * b[2] * b[2]));
            }
            img.at(y, x) = std::clamp(v, 0.02, 0.98);
        }
    return img;
}

}  // namespace holotest

#endif
