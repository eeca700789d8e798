#include "derainsplat/splat/camera.hpp"

#include "derainsplat/common/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace drs::splat {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n == 0.0) throw ValidationError("look_at: degenerate direction");
    return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

Mat3 Camera::rotation() const {
    const auto& m = world_to_camera;
    return {m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]};
}

Vec3 Camera::translation() const { return {world_to_camera[3], world_to_camera[7], world_to_camera[11]}; }

Vec3 Camera::center() const {
    const Mat3 r = rotation();
    const Vec3 t = translation();
    // c = -R^T t
    Vec3 c{};
    for (int i = 0; i < 3; ++i) c[i] = -(r[0 * 3 + i] * t[0] + r[1 * 3 + i] * t[1] + r[2 * 3 + i] * t[2]);
    return c;
}

void Camera::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw ValidationError("camera: focal lengths must be positive");
    if (width == 0 || height == 0) throw ValidationError("camera: image size must be positive");
    const Mat3 r = rotation();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double d = 0.0;
            for (int k = 0; k < 3; ++k) d += r[i * 3 + k] * r[j * 3 + k];
            if (std::fabs(d - (i == j ? 1.0 : 0.0)) > 1e-9)
                throw ValidationError("camera: rotation block is not orthonormal (row " + std::to_string(i) +
                                      " . row " + std::to_string(j) + " = " + std::to_string(d) + ")");
        }
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    if (det < 0.0) throw ValidationError("camera: rotation has determinant -1 (reflection)");
    const auto& m = world_to_camera;
    if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0)
        throw ValidationError("camera: bottom row of world_to_camera must be (0,0,0,1)");
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y, std::size_t width,
               std::size_t height) {
    const Vec3 z = normalized(sub(target, eye));
    const Vec3 x = normalized(cross(z, up));
    const Vec3 y = cross(z, x);
    Camera cam;
    const Vec3 rows[3] = {x, y, z};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) cam.world_to_camera[i * 4 + j] = rows[i][j];
        cam.world_to_camera[i * 4 + 3] = -(rows[i][0] * eye[0] + rows[i][1] * eye[1] + rows[i][2] * eye[2]);
    }
    cam.width = width;
    cam.height = height;
    cam.fy = 0.5 * static_cast<double>(height) / std::tan(0.5 * fov_y * std::numbers::pi / 180.0);
    cam.fx = cam.fy;
    cam.cx = 0.5 * static_cast<double>(width);
    cam.cy = 0.5 * static_cast<double>(height);
    return cam;
}

}  // namespace drs::splat
