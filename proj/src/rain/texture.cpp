#include "derainsplat/rain/texture.hpp"

#include "derainsplat/common/error.hpp"
#include "derainsplat/common/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace drs::rain {

ad::Tensor procedural_texture(std::uint64_t seed, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw ValidationError("procedural_texture: empty size");
    Rng rng(mix_seed(seed ^ 0x7465787475726cULL));
    const double h = static_cast<double>(height), w = static_cast<double>(width);
    std::vector<double> img(3 * height * width);
    auto at = [&](std::size_t c, std::size_t y, std::size_t x) -> double& { return img[(c * height + y) * width + x]; };

    std::array<double, 3> c0, c1;
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.1, 0.8);
        c1[c] = rng.uniform(0.1, 0.8);
    }
    const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double gx = std::cos(ang), gy = std::sin(ang);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const double t = 0.5 + 0.5 * ((x / w - 0.5) * gx + (y / h - 0.5) * gy) * 1.4;
            for (int c = 0; c < 3; ++c) at(c, y, x) = c0[c] + (c1[c] - c0[c]) * std::clamp(t, 0.0, 1.0);
        }

    const int shapes = 4 + static_cast<int>(rng.below(4));
    for (int s = 0; s < shapes; ++s) {
        std::array<double, 3> col;
        for (double& v : col) v = rng.uniform(0.05, 0.85);
        const double cx = rng.uniform(0, w), cy = rng.uniform(0, h);
        const double rx = rng.uniform(0.08, 0.3) * w, ry = rng.uniform(0.08, 0.3) * h;
        const bool disc = rng.uniform() < 0.5;
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
                const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0;
                if (inside)
                    for (int c = 0; c < 3; ++c) at(c, y, x) = col[c];
            }
    }

    const double fx = rng.uniform(1.0, 4.0) * 2.0 * std::numbers::pi / w;
    const double fy = rng.uniform(1.0, 4.0) * 2.0 * std::numbers::pi / h;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const double p = 0.05 * std::sin(fx * x + fy * y + phase);
            for (int c = 0; c < 3; ++c) at(c, y, x) = std::clamp(at(c, y, x) + p, 0.05, 0.85);
        }
    return ad::Tensor({3, height, width}, std::move(img));
}

}  // namespace drs::rain
