#include "derainsplat/splat/geometry.hpp"

#include "derainsplat/ad/op_support.hpp"

#include <cmath>
#include <string>

namespace drs::splat {

using ad::active_tape;
using ad::Shape;
using ad::detail::make_result;
using ad::detail::tracking;
using ad::detail::wants_grad;

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};

using Quat = std::array<double, 4>;

Quat normalize_quat(const Quat& q, double& norm) {
    norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (!(norm > 0.0)) throw NumericalError("quaternion has zero norm");
    return {q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm};
}

Mat3 rotation_of_unit(const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

// dL/dq for unit q given dL/dR.
Quat rotation_vjp(const Quat& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    const Mat3 dw{0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
    const Mat3 dx{0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
    const Mat3 dy{-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
    const Mat3 dz{-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
    Quat out{};
    const Mat3* d[4] = {&dw, &dx, &dy, &dz};
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 9; ++i) out[k] += g[i] * (*d[k])[i];
    return out;
}

// Symmetric 3x3 from the packed (xx, xy, xz, yy, yz, zz) layout.
Mat3 unpack_sym(const double* p) { return {p[0], p[1], p[2], p[1], p[3], p[4], p[2], p[4], p[5]}; }

// Gradient of a packed symmetric output as a symmetric matrix G with
// L ~ sum_ij G_ij S_ij: off-diagonal packed entries split across both halves.
Mat3 unpack_sym_grad(const double* g) {
    return {g[0], 0.5 * g[1], 0.5 * g[2], 0.5 * g[1], g[3], 0.5 * g[4], 0.5 * g[2], 0.5 * g[4], g[5]};
}

void check_rows(const char* op, const Tensor& t, std::size_t cols) {
    if (t.rank() != 2 || t.size(1) != cols)
        throw DimensionError(std::string(op) + ": expected [N," + std::to_string(cols) + "], got " +
                             ad::shape_str(t.shape()));
}

// Basis derivatives dY_k/d(dir) for k < count, written as rows of 3.
void sh_basis_grad(const Vec3& d, int degree, double* out) {
    const double x = d[0], y = d[1], z = d[2];
    const std::size_t n = sh_coeff_count(degree);
    for (std::size_t i = 0; i < 3 * n; ++i) out[i] = 0.0;
    if (degree >= 1) {
        out[1 * 3 + 1] = -kC1;
        out[2 * 3 + 2] = kC1;
        out[3 * 3 + 0] = -kC1;
    }
    if (degree >= 2) {
        out[4 * 3 + 0] = kC2[0] * y;
        out[4 * 3 + 1] = kC2[0] * x;
        out[5 * 3 + 1] = kC2[1] * z;
        out[5 * 3 + 2] = kC2[1] * y;
        out[6 * 3 + 0] = -2 * kC2[2] * x;
        out[6 * 3 + 1] = -2 * kC2[2] * y;
        out[6 * 3 + 2] = 4 * kC2[2] * z;
        out[7 * 3 + 0] = kC2[3] * z;
        out[7 * 3 + 2] = kC2[3] * x;
        out[8 * 3 + 0] = 2 * kC2[4] * x;
        out[8 * 3 + 1] = -2 * kC2[4] * y;
    }
}

void check_degree(int degree) {
    if (degree < 0 || degree > 2) throw ValidationError("SH degree must be 0, 1 or 2, got " + std::to_string(degree));
}

}  // namespace

Mat3 quat_to_rotation(const Quat& q) {
    double norm = 0.0;
    return rotation_of_unit(normalize_quat(q, norm));
}

Mat3 covariance3d(const Quat& rot, const Vec3& scale) {
    const Mat3 r = quat_to_rotation(rot);
    Mat3 m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i * 3 + j] = r[i * 3 + j] * scale[j];
    Mat3 s{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s[i * 3 + j] = m[i * 3] * m[j * 3] + m[i * 3 + 1] * m[j * 3 + 1] + m[i * 3 + 2] * m[j * 3 + 2];
    return s;
}

void sh_basis(const Vec3& d, int degree, double* out) {
    check_degree(degree);
    const double x = d[0], y = d[1], z = d[2];
    out[0] = kC0;
    if (degree >= 1) {
        out[1] = -kC1 * y;
        out[2] = kC1 * z;
        out[3] = -kC1 * x;
    }
    if (degree >= 2) {
        out[4] = kC2[0] * x * y;
        out[5] = kC2[1] * y * z;
        out[6] = kC2[2] * (2 * z * z - x * x - y * y);
        out[7] = kC2[3] * x * z;
        out[8] = kC2[4] * (x * x - y * y);
    }
}

double sh_eval(const std::vector<double>& coeffs, const Vec3& dir, int degree) {
    check_degree(degree);
    const std::size_t n = sh_coeff_count(degree);
    if (coeffs.size() != n)
        throw DimensionError("sh_eval: expected " + std::to_string(n) + " coefficients, got " +
                             std::to_string(coeffs.size()));
    const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    if (std::fabs(len - 1.0) > 1e-9) throw ValidationError("sh_eval: view direction is not unit length");
    double basis[9];
    sh_basis(dir, degree, basis);
    double out = 0.0;
    for (std::size_t k = 0; k < n; ++k) out += coeffs[k] * basis[k];
    return out;
}

Projected2d project_gaussian(const Vec3& mean, const Mat3& cov3d, const Camera& cam) {
    const std::vector<double> m(mean.begin(), mean.end());
    const std::vector<double> c{cov3d[0], cov3d[1], cov3d[2], cov3d[4], cov3d[5], cov3d[8]};
    ad::NoGradScope no_grad;
    auto b = project_batch(Tensor({1, 3}, m), Tensor({1, 6}, c), cam);
    Projected2d p;
    p.mean = {b.mean2d[0], b.mean2d[1]};
    p.cov = {b.cov2d[0], b.cov2d[1], b.cov2d[2]};
    p.depth = b.depth[0];
    p.visible = b.visible[0] != 0;
    return p;
}

Tensor covariance3d_batch(const Tensor& rotations, const Tensor& log_scales) {
    check_rows("covariance3d", rotations, 4);
    check_rows("covariance3d", log_scales, 3);
    const std::size_t n = rotations.size(0);
    if (log_scales.size(0) != n) throw DimensionError("covariance3d: rotations and log_scales disagree on axis 0");
    std::vector<double> out(n * 6);
    for (std::size_t i = 0; i < n; ++i) {
        const Quat q{rotations[i * 4], rotations[i * 4 + 1], rotations[i * 4 + 2], rotations[i * 4 + 3]};
        const Vec3 s{std::exp(log_scales[i * 3]), std::exp(log_scales[i * 3 + 1]), std::exp(log_scales[i * 3 + 2])};
        const Mat3 c = covariance3d(q, s);
        const double packed[6] = {c[0], c[1], c[2], c[4], c[5], c[8]};
        std::copy(packed, packed + 6, out.begin() + static_cast<std::ptrdiff_t>(i * 6));
    }
    const bool track = tracking({&rotations, &log_scales});
    Tensor y = make_result("covariance3d", Shape{n, 6}, std::move(out), track);
    if (track) {
        active_tape()->record([qn = rotations.node(), ln = log_scales.node(), yn = y.node(), n] {
            if (yn->grad.empty()) return;
            for (std::size_t i = 0; i < n; ++i) {
                double norm = 0.0;
                const Quat q = normalize_quat({qn->value[i * 4], qn->value[i * 4 + 1], qn->value[i * 4 + 2],
                                               qn->value[i * 4 + 3]},
                                              norm);
                const Mat3 r = rotation_of_unit(q);
                Vec3 s{};
                for (int j = 0; j < 3; ++j) s[j] = std::exp(ln->value[i * 3 + j]);
                Mat3 m{};
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) m[a * 3 + b] = r[a * 3 + b] * s[b];
                const Mat3 g = unpack_sym_grad(&yn->grad[i * 6]);
                // dM = 2 G M
                Mat3 dm{};
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b)
                        dm[a * 3 + b] = 2.0 * (g[a * 3] * m[b] + g[a * 3 + 1] * m[3 + b] + g[a * 3 + 2] * m[6 + b]);
                if (wants_grad(ln)) {
                    auto& gl = ln->ensure_grad();
                    for (int b = 0; b < 3; ++b)
                        gl[i * 3 + b] += (dm[b] * r[b] + dm[3 + b] * r[3 + b] + dm[6 + b] * r[6 + b]) * s[b];
                }
                if (wants_grad(qn)) {
                    Mat3 dr{};
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b) dr[a * 3 + b] = dm[a * 3 + b] * s[b];
                    const Quat dqhat = rotation_vjp(q, dr);
                    const double dot = q[0] * dqhat[0] + q[1] * dqhat[1] + q[2] * dqhat[2] + q[3] * dqhat[3];
                    auto& gq = qn->ensure_grad();
                    for (int k = 0; k < 4; ++k) gq[i * 4 + k] += (dqhat[k] - q[k] * dot) / norm;
                }
            }
        });
    }
    return y;
}

ProjectedBatch project_batch(const Tensor& means, const Tensor& cov3d, const Camera& cam) {
    check_rows("project", means, 3);
    check_rows("project", cov3d, 6);
    const std::size_t n = means.size(0);
    if (cov3d.size(0) != n) throw DimensionError("project: means and cov3d disagree on axis 0");
    const Mat3 w = cam.rotation();
    const Vec3 tw = cam.translation();
    ProjectedBatch out;
    out.depth.assign(n, 0.0);
    out.visible.assign(n, 0);
    std::vector<double> m2(n * 2, 0.0), c2(n * 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 t{};
        for (int a = 0; a < 3; ++a)
            t[a] = w[a * 3] * means[i * 3] + w[a * 3 + 1] * means[i * 3 + 1] + w[a * 3 + 2] * means[i * 3 + 2] + tw[a];
        out.depth[i] = t[2];
        if (!(t[2] > kNearPlane)) {
            c2[i * 3] = 1.0;
            c2[i * 3 + 2] = 1.0;
            continue;
        }
        out.visible[i] = 1;
        const double iz = 1.0 / t[2];
        m2[i * 2] = cam.fx * t[0] * iz + cam.cx;
        m2[i * 2 + 1] = cam.fy * t[1] * iz + cam.cy;
        const double j00 = cam.fx * iz, j02 = -cam.fx * t[0] * iz * iz;
        const double j11 = cam.fy * iz, j12 = -cam.fy * t[1] * iz * iz;
        double tm[6];
        for (int b = 0; b < 3; ++b) {
            tm[b] = j00 * w[b] + j02 * w[6 + b];
            tm[3 + b] = j11 * w[3 + b] + j12 * w[6 + b];
        }
        const Mat3 s = unpack_sym(&cov3d.values()[i * 6]);
        double ts[6];  // T * Sigma, 2x3
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 3; ++b)
                ts[a * 3 + b] = tm[a * 3] * s[b] + tm[a * 3 + 1] * s[3 + b] + tm[a * 3 + 2] * s[6 + b];
        auto row_dot = [&](int a, int b) {
            return ts[a * 3] * tm[b * 3] + ts[a * 3 + 1] * tm[b * 3 + 1] + ts[a * 3 + 2] * tm[b * 3 + 2];
        };
        c2[i * 3] = row_dot(0, 0) + kCov2dFloor;
        c2[i * 3 + 1] = row_dot(0, 1);
        c2[i * 3 + 2] = row_dot(1, 1) + kCov2dFloor;
    }
    const bool track = tracking({&means, &cov3d});
    out.mean2d = make_result("project", Shape{n, 2}, std::move(m2), track);
    out.cov2d = make_result("project", Shape{n, 3}, std::move(c2), track);
    if (track) {
        active_tape()->record([mn = means.node(), cn = cov3d.node(), m2n = out.mean2d.node(), c2n = out.cov2d.node(),
                               vis = out.visible, w, tw, fx = cam.fx, fy = cam.fy, n] {
            if (m2n->grad.empty() && c2n->grad.empty()) return;
            for (std::size_t i = 0; i < n; ++i) {
                if (!vis[i]) continue;
                const double* mu = &mn->value[i * 3];
                Vec3 t{};
                for (int a = 0; a < 3; ++a) t[a] = w[a * 3] * mu[0] + w[a * 3 + 1] * mu[1] + w[a * 3 + 2] * mu[2] + tw[a];
                const double iz = 1.0 / t[2];
                const double j00 = fx * iz, j02 = -fx * t[0] * iz * iz;
                const double j11 = fy * iz, j12 = -fy * t[1] * iz * iz;
                double tm[6];
                for (int b = 0; b < 3; ++b) {
                    tm[b] = j00 * w[b] + j02 * w[6 + b];
                    tm[3 + b] = j11 * w[3 + b] + j12 * w[6 + b];
                }
                Vec3 dt{};
                if (!m2n->grad.empty()) {
                    const double gu = m2n->grad[i * 2], gv = m2n->grad[i * 2 + 1];
                    dt[0] += gu * fx * iz;
                    dt[1] += gv * fy * iz;
                    dt[2] += -gu * fx * t[0] * iz * iz - gv * fy * t[1] * iz * iz;
                }
                if (!c2n->grad.empty()) {
                    const double ga = c2n->grad[i * 3], gb = 0.5 * c2n->grad[i * 3 + 1], gc = c2n->grad[i * 3 + 2];
                    const double g2[4] = {ga, gb, gb, gc};
                    const Mat3 s = unpack_sym(&cn->value[i * 6]);
                    if (wants_grad(cn)) {
                        // dSigma = T^T G T
                        double gt[6];  // G * T, 2x3
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < 3; ++b) gt[a * 3 + b] = g2[a * 2] * tm[b] + g2[a * 2 + 1] * tm[3 + b];
                        auto full = [&](int a, int b) { return tm[a] * gt[b] + tm[3 + a] * gt[3 + b]; };
                        auto& gs = cn->ensure_grad();
                        gs[i * 6 + 0] += full(0, 0);
                        gs[i * 6 + 1] += 2.0 * full(0, 1);
                        gs[i * 6 + 2] += 2.0 * full(0, 2);
                        gs[i * 6 + 3] += full(1, 1);
                        gs[i * 6 + 4] += 2.0 * full(1, 2);
                        gs[i * 6 + 5] += full(2, 2);
                    }
                    // dT = 2 G T Sigma
                    double ts[6];
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 3; ++b)
                            ts[a * 3 + b] = tm[a * 3] * s[b] + tm[a * 3 + 1] * s[3 + b] + tm[a * 3 + 2] * s[6 + b];
                    double dtm[6];
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 3; ++b)
                            dtm[a * 3 + b] = 2.0 * (g2[a * 2] * ts[b] + g2[a * 2 + 1] * ts[3 + b]);
                    // T = J W: dJ_ab = sum_j dT_aj W_bj
                    auto dj = [&](int a, int b) {
                        return dtm[a * 3] * w[b * 3] + dtm[a * 3 + 1] * w[b * 3 + 1] + dtm[a * 3 + 2] * w[b * 3 + 2];
                    };
                    const double dj00 = dj(0, 0), dj02 = dj(0, 2), dj11 = dj(1, 1), dj12 = dj(1, 2);
                    dt[0] += dj02 * (-fx * iz * iz);
                    dt[1] += dj12 * (-fy * iz * iz);
                    dt[2] += dj00 * (-fx * iz * iz) + dj02 * (2.0 * fx * t[0] * iz * iz * iz) +
                             dj11 * (-fy * iz * iz) + dj12 * (2.0 * fy * t[1] * iz * iz * iz);
                }
                if (wants_grad(mn)) {
                    auto& gm = mn->ensure_grad();
                    for (int b = 0; b < 3; ++b) gm[i * 3 + b] += w[b] * dt[0] + w[3 + b] * dt[1] + w[6 + b] * dt[2];
                }
            }
        });
    }
    return out;
}

Tensor sh_colors(const Tensor& sh, const Tensor& means, const Vec3& center, int degree) {
    check_degree(degree);
    const std::size_t k = sh_coeff_count(degree);
    if (sh.rank() != 3 || sh.size(1) != k || sh.size(2) != 3)
        throw DimensionError("sh_colors: expected sh of shape [N," + std::to_string(k) + ",3], got " +
                             ad::shape_str(sh.shape()));
    check_rows("sh_colors", means, 3);
    const std::size_t n = sh.size(0);
    if (means.size(0) != n) throw DimensionError("sh_colors: sh and means disagree on axis 0");

    auto direction = [center](const double* mu, double& len) {
        Vec3 v{mu[0] - center[0], mu[1] - center[1], mu[2] - center[2]};
        len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (!(len > 0.0)) throw NumericalError("sh_colors: Gaussian mean coincides with the camera center");
        return Vec3{v[0] / len, v[1] / len, v[2] / len};
    };

    std::vector<double> out(n * 3);
    double basis[9];
    for (std::size_t i = 0; i < n; ++i) {
        double len = 0.0;
        sh_basis(direction(&means.values()[i * 3], len), degree, basis);
        for (std::size_t c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += sh[(i * k + j) * 3 + c] * basis[j];
            out[i * 3 + c] = acc + 0.5;
        }
    }
    const bool track = tracking({&sh, &means});
    Tensor y = make_result("sh_colors", Shape{n, 3}, std::move(out), track);
    if (track) {
        active_tape()->record([sn = sh.node(), mn = means.node(), yn = y.node(), direction, degree, k, n] {
            if (yn->grad.empty()) return;
            double basis[9], dbasis[27];
            for (std::size_t i = 0; i < n; ++i) {
                double len = 0.0;
                const Vec3 d = direction(&mn->value[i * 3], len);
                sh_basis(d, degree, basis);
                const double* g = &yn->grad[i * 3];
                if (wants_grad(sn)) {
                    auto& gs = sn->ensure_grad();
                    for (std::size_t j = 0; j < k; ++j)
                        for (std::size_t c = 0; c < 3; ++c) gs[(i * k + j) * 3 + c] += g[c] * basis[j];
                }
                if (wants_grad(mn) && degree > 0) {
                    sh_basis_grad(d, degree, dbasis);
                    Vec3 dd{};
                    for (std::size_t j = 0; j < k; ++j) {
                        double w = 0.0;
                        for (std::size_t c = 0; c < 3; ++c) w += g[c] * sn->value[(i * k + j) * 3 + c];
                        for (int a = 0; a < 3; ++a) dd[a] += w * dbasis[j * 3 + a];
                    }
                    const double proj = d[0] * dd[0] + d[1] * dd[1] + d[2] * dd[2];
                    auto& gm = mn->ensure_grad();
                    for (int a = 0; a < 3; ++a) gm[i * 3 + a] += (dd[a] - d[a] * proj) / len;
                }
            }
        });
    }
    return y;
}

Tensor flat_covariance(const Tensor& log_scales, const Tensor& angles) {
    check_rows("flat_covariance", log_scales, 2);
    const std::size_t n = log_scales.size(0);
    if (angles.rank() != 1 || angles.size(0) != n)
        throw DimensionError("flat_covariance: angles must be [" + std::to_string(n) + "], got " +
                             ad::shape_str(angles.shape()));
    std::vector<double> out(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::exp(2.0 * log_scales[i * 2]), y = std::exp(2.0 * log_scales[i * 2 + 1]);
        const double c = std::cos(angles[i]), s = std::sin(angles[i]);
        out[i * 3] = c * c * x + s * s * y + kCov2dFloor;
        out[i * 3 + 1] = c * s * (x - y);
        out[i * 3 + 2] = s * s * x + c * c * y + kCov2dFloor;
    }
    const bool track = tracking({&log_scales, &angles});
    Tensor yt = make_result("flat_covariance", Shape{n, 3}, std::move(out), track);
    if (track) {
        active_tape()->record([ln = log_scales.node(), an = angles.node(), yn = yt.node(), n] {
            if (yn->grad.empty()) return;
            for (std::size_t i = 0; i < n; ++i) {
                const double x = std::exp(2.0 * ln->value[i * 2]), y = std::exp(2.0 * ln->value[i * 2 + 1]);
                const double c = std::cos(an->value[i]), s = std::sin(an->value[i]);
                const double ga = yn->grad[i * 3], gb = yn->grad[i * 3 + 1], gc = yn->grad[i * 3 + 2];
                if (wants_grad(ln)) {
                    const double dx = ga * c * c + gb * c * s + gc * s * s;
                    const double dy = ga * s * s - gb * c * s + gc * c * c;
                    auto& gl = ln->ensure_grad();
                    gl[i * 2] += dx * 2.0 * x;
                    gl[i * 2 + 1] += dy * 2.0 * y;
                }
                if (wants_grad(an)) {
                    const double s2 = 2.0 * s * c, c2 = c * c - s * s;
                    an->ensure_grad()[i] += (ga - gc) * (y - x) * s2 + gb * c2 * (x - y);
                }
            }
        });
    }
    return yt;
}

}  // namespace drs::splat
