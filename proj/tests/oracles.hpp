#pragma once

// Independent reference implementations used as test oracles. They are
// written as plain loops over the defining formulas and share no code with
// the library beyond the Tensor container.

#include "derainsplat/ad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

namespace drs::oracle {

/// Per-pixel front-to-back compositing over every splat, sorted by depth with
/// ties by index, with the 3-sigma, 0.99 and 1e-4 truncation constants.
inline std::vector<double> naive_composite(const ad::Tensor& mean2d, const ad::Tensor& cov2d, const ad::Tensor& opacity,
                                           const ad::Tensor& color, const std::vector<double>& depth,
                                           std::size_t h, std::size_t w, const double bg[3]) {
    const std::size_t n = depth.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
    std::vector<double> img(3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double T = 1.0, c[3] = {0, 0, 0};
            for (std::size_t i : order) {
                if (T < 1e-4) break;
                const double a = cov2d[i * 3], b = cov2d[i * 3 + 1], cc = cov2d[i * 3 + 2];
                const double det = a * cc - b * b;
                const double A = cc / det, B = -b / det, C = a / det;
                const double dx = (static_cast<double>(x) + 0.5) - mean2d[i * 2];
                const double dy = (static_cast<double>(y) + 0.5) - mean2d[i * 2 + 1];
                const double power = -0.5 * (A * dx * dx + C * dy * dy) - B * dx * dy;
                if (-2.0 * power > 9.0) continue;
                const double alpha = std::min(0.99, opacity[i] * std::exp(power));
                for (int ch = 0; ch < 3; ++ch) c[ch] += color[i * 3 + ch] * (alpha * T);
                T *= (1.0 - alpha);
            }
            for (int ch = 0; ch < 3; ++ch) img[(ch * h + y) * w + x] = c[ch] + bg[ch] * T;
        }
    return img;
}

/// Direct double-sum 2D DFT of channel c of a [C,H,W] tensor.
inline std::vector<std::complex<double>> direct_dft2(const ad::Tensor& x, std::size_t c) {
    const std::size_t h = x.size(1), w = x.size(2);
    std::vector<std::complex<double>> out(h * w);
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t a = 0; a < h; ++a)
                for (std::size_t b = 0; b < w; ++b) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(u * a) / static_cast<double>(h) +
                                        static_cast<double>(v * b) / static_cast<double>(w));
                    acc += x[(c * h + a) * w + b] * std::polar(1.0, ang);
                }
            out[u * w + v] = acc;
        }
    return out;
}

}  // namespace drs::oracle
