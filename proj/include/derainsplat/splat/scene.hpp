#pragma once

// Parameter containers for the 3D and flatland scenes, initialization, and
// the render entry points built from the taped geometry + rasterizer ops.

#include "derainsplat/splat/camera.hpp"
#include "derainsplat/splat/geometry.hpp"
#include "derainsplat/splat/rasterize.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drs::splat {

struct GaussianSet {
    Tensor means;           // [N,3]
    Tensor rotations;       // [N,4] quaternion (w,x,y,z)
    Tensor log_scales;      // [N,3]
    Tensor opacity_logits;  // [N]
    Tensor sh;              // [N,K,3]
    int sh_degree = 0;

    std::size_t size() const { return means.defined() ? means.size(0) : 0; }
    /// Named trainable tensors in a fixed order.
    std::vector<std::pair<std::string, Tensor*>> parameters();
    /// Rescales every quaternion to unit length.
    void normalize_rotations();
    void validate() const;
};

/// Splats living directly in the image plane. Depth is the splat index, so
/// earlier splats composite in front.
struct FlatSplats {
    Tensor means;           // [N,2] pixels
    Tensor log_scales;      // [N,2]
    Tensor angles;          // [N] radians
    Tensor opacity_logits;  // [N]
    Tensor colors;          // [N,3]

    std::size_t size() const { return means.defined() ? means.size(0) : 0; }
    std::vector<std::pair<std::string, Tensor*>> parameters();
    void validate() const;
};

struct Point {
    Vec3 position{};
    Vec3 color{0.5, 0.5, 0.5};
};

struct InitConfig {
    int sh_degree = 0;
    double initial_opacity = 0.1;
    int neighbors = 3;  // scale = mean distance to this many nearest neighbors
    Vec3 box_min{-1, -1, -1};
    Vec3 box_max{1, 1, 1};
};

/// One Gaussian per point: identity rotation, isotropic log-scale from the
/// nearest-neighbor distance, opacity logit = logit(initial_opacity), SH DC
/// from the point color (gray when none is given).
GaussianSet init_gaussians(const std::vector<Point>& points, const InitConfig& config);

/// `count` points uniform in the config's box, gray.
GaussianSet init_gaussians_random(std::size_t count, std::uint64_t seed, const InitConfig& config);

/// Mean distance from each point to its k nearest neighbors.
std::vector<double> nearest_neighbor_scales(const std::vector<Vec3>& points, int k);

struct FlatInitConfig {
    double initial_opacity = 0.1;
    /// When set, splat colors are taken from this [3,H,W] image at the mean.
    Tensor color_source;
};

/// Uniform means over the image, NN-based isotropic scales, zero angles,
/// gray or sampled colors.
FlatSplats init_flat_splats(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                            const FlatInitConfig& config);

RenderOutput render(const GaussianSet& scene, const Camera& cam, const RasterSettings& settings);

RenderOutput render_flatland(const FlatSplats& splats, const RasterSettings& settings);

}  // namespace drs::splat
