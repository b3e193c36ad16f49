#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "hdrsplat/image.hpp"
#include "hdrsplat/scene.hpp"

namespace hdrsplat::fixtures {

// Smooth deterministic image pair, mirrored by tests/oracles/derive.py.
inline ImageBuffer formula_a(int w, int h) {
    ImageBuffer img(w, h, ColorSpace::LdrUnit);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.5 + 0.4 * std::sin(0.7 * x + 1.3 * y + c);
    return img;
}

inline ImageBuffer formula_b(int w, int h) {
    ImageBuffer img(w, h, ColorSpace::LdrUnit);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) =
                    std::clamp(0.5 + 0.4 * std::sin(0.7 * x + 1.3 * y + c) + 0.1 * std::cos(0.5 * x * y + c), 0.0, 1.0);
    return img;
}

inline ImageBuffer random_image(int w, int h, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ImageBuffer img(w, h, ColorSpace::LdrUnit);
    for (double& v : img.data) v = u(rng);
    return img;
}

inline GaussianCloud random_cloud(std::size_t n, std::mt19937_64& rng, double spread = 0.5) {
    std::uniform_real_distribution<double> u(-1, 1);
    GaussianCloud c;
    c.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            c.mu[3 * i + k] = spread * u(rng);
            c.log_scale[3 * i + k] = std::log(0.15) + 0.4 * u(rng);
            c.l_a_raw[3 * i + k] = 0.5 * u(rng);
        }
        for (int k = 0; k < 4; ++k) c.rotation[4 * i + k] = u(rng) + (k == 0 ? 1.5 : 0.0);
        c.opacity_logit[i] = u(rng);
        for (int k = 0; k < kReflectanceDim; ++k) c.h_r[kReflectanceDim * i + k] = 0.5 * u(rng);
    }
    return c;
}

}  // namespace hdrsplat::fixtures
