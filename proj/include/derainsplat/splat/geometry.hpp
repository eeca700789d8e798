#pragma once

// Per-Gaussian geometry: covariance factorization, pinhole projection and
// spherical-harmonic color. Batched versions are taped ops over [N,...]
// tensors; the scalar helpers serve tests and tools.

#include "derainsplat/ad/tensor.hpp"
#include "derainsplat/splat/camera.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace drs::splat {

using ad::Tensor;

/// Added to every 2D covariance, in pixel^2.
inline constexpr double kCov2dFloor = 0.3;
/// Gaussians with camera-space depth below this are culled.
inline constexpr double kNearPlane = 0.2;

/// Number of SH coefficients per channel for degree 0..2.
constexpr std::size_t sh_coeff_count(int degree) { return static_cast<std::size_t>((degree + 1) * (degree + 1)); }

/// Rotation matrix of the normalized quaternion (w, x, y, z).
Mat3 quat_to_rotation(const std::array<double, 4>& q);

/// R S S^T R^T for R from quaternion `rot` (normalized internally) and S = diag(scale).
Mat3 covariance3d(const std::array<double, 4>& rot, const Vec3& scale);

/// Real SH basis (degree <= 2) dotted with `coeffs` (coeff_count entries).
/// `dir` must be unit length within 1e-9.
double sh_eval(const std::vector<double>& coeffs, const Vec3& dir, int degree);

/// Fills basis values Y_0..Y_{count-1} for direction `dir`.
void sh_basis(const Vec3& dir, int degree, double* out);

struct Projected2d {
    std::array<double, 2> mean{};
    std::array<double, 3> cov{};  // xx, xy, yy including the floor
    double depth = 0.0;
    bool visible = false;
};

Projected2d project_gaussian(const Vec3& mean, const Mat3& cov3d, const Camera& cam);

// --- taped batch ops ----------------------------------------------------------

/// rotations [N,4], log_scales [N,3] -> [N,6] as (xx, xy, xz, yy, yz, zz).
Tensor covariance3d_batch(const Tensor& rotations, const Tensor& log_scales);

struct ProjectedBatch {
    Tensor mean2d;  // [N,2]
    Tensor cov2d;   // [N,3]
    std::vector<double> depth;
    std::vector<std::uint8_t> visible;
};

/// means [N,3], cov3d [N,6] -> 2D splat geometry. Culled entries get zero
/// mean, unit covariance and no gradient.
ProjectedBatch project_batch(const Tensor& means, const Tensor& cov3d, const Camera& cam);

/// sh [N,K,3] evaluated toward each mean from the camera center, plus 0.5.
Tensor sh_colors(const Tensor& sh, const Tensor& means, const Vec3& camera_center, int degree);

/// Flatland covariance: log_scales [N,2], angles [N] -> [N,3] with the floor added.
Tensor flat_covariance(const Tensor& log_scales, const Tensor& angles);

}  // namespace drs::splat
