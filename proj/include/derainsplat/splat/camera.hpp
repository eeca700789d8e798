#pragma once

#include <array>
#include <cstddef>

namespace drs::splat {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

/// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (x, y)
/// covers [x, x+1) x [y, y+1); its center is (x+0.5, y+0.5).
struct Camera {
    std::array<double, 16> world_to_camera{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // row-major
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    std::size_t width = 0, height = 0;

    Mat3 rotation() const;
    Vec3 translation() const;
    /// Camera center in world coordinates.
    Vec3 center() const;
    /// Throws ValidationError unless the rotation block is orthonormal within
    /// 1e-9 with determinant +1, focal lengths are positive and the image is non-empty.
    void validate() const;
};

/// Camera at `eye` looking at `target`; `up` fixes the roll. fov_y in degrees.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y, std::size_t width,
               std::size_t height);

}  // namespace drs::splat
