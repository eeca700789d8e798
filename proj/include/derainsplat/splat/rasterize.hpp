#pragma once

// Front-to-back alpha compositing of 2D Gaussian splats.
//
// Per pixel with center p = (x+0.5, y+0.5), visible splats are visited in
// ascending depth (stable, ties by index). For splat i with cov2d (a, b, c):
//
//   det   = a*c - b*b                     (must be > 0)
//   conic = (c/det, -b/det, a/det) =: (A, B, C)
//   d     = p - mean2d
//   power = -0.5*(A*dx*dx + C*dy*dy) - B*dx*dy
//   skip if -2*power > 9                  (outside 3 sigma)
//   alpha = min(0.99, opacity * exp(power))
//   stop  before visiting i if T < 1e-4
//   out  += color * (alpha*T);  T *= (1 - alpha)
//
// and finally out += background * T. Tiled and naive evaluation perform the
// identical sequence of operations per pixel and agree bit for bit.

#include "derainsplat/ad/tensor.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace drs::splat {

using ad::Tensor;

inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kMahalanobisCutoff = 9.0;
inline constexpr std::size_t kTileSize = 16;

struct SplatInputs {
    Tensor mean2d;   // [N,2] pixels
    Tensor cov2d;    // [N,3] (xx, xy, yy)
    Tensor opacity;  // [N] in (0,1)
    Tensor color;    // [N,3]
    std::vector<double> depth;
    std::vector<std::uint8_t> visible;  // empty = all visible
};

struct RasterSettings {
    std::size_t width = 0;
    std::size_t height = 0;
    std::array<double, 3> background{0.0, 0.0, 0.0};
    bool tiled = true;
};

struct RenderOutput {
    Tensor color;        // [3,H,W]
    Tensor alpha_accum;  // [1,H,W], 1 - final transmittance; never differentiated
};

/// Renders and, when a tape is active, records the adjoint for all four
/// splat tensors. The backward pass recomputes each pixel's contributor list.
RenderOutput rasterize_splats(const SplatInputs& splats, const RasterSettings& settings);

/// Splat indices sorted for compositing: ascending depth, ties by index,
/// invisible entries dropped.
std::vector<std::size_t> depth_order(const std::vector<double>& depth, const std::vector<std::uint8_t>& visible);

}  // namespace drs::splat
