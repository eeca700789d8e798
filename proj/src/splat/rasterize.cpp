#include "derainsplat/splat/rasterize.hpp"

#include "derainsplat/ad/op_support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace drs::splat {

using ad::active_tape;
using ad::Shape;
using ad::detail::make_result;
using ad::detail::NodePtr;
using ad::detail::tracking;
using ad::detail::wants_grad;

namespace {

struct Prepared {
    std::size_t index;
    double mx, my;
    double A, B, C;  // conic
    double opacity;
    double color[3];
};

struct Contribution {
    const Prepared* splat;
    double alpha, gauss, dx, dy, transmittance;
    bool clamped;
};

struct Frame {
    std::vector<Prepared> splats;  // depth order
    // per tile, positions into `splats` in depth order; a single list when untiled
    std::vector<std::vector<std::uint32_t>> lists;
    std::size_t tiles_x = 1;
    bool tiled = false;
};

Frame prepare(const SplatInputs& s, const RasterSettings& rs) {
    Frame f;
    f.tiled = rs.tiled;
    for (std::size_t i : depth_order(s.depth, s.visible)) {
        const double a = s.cov2d[i * 3], b = s.cov2d[i * 3 + 1], c = s.cov2d[i * 3 + 2];
        const double det = a * c - b * b;
        if (!(det > 0.0))
            throw NumericalError("rasterize: 2D covariance of splat " + std::to_string(i) + " is not positive definite");
        Prepared p{i, s.mean2d[i * 2], s.mean2d[i * 2 + 1], c / det, -b / det, a / det, s.opacity[i], {}};
        for (int ch = 0; ch < 3; ++ch) p.color[ch] = s.color[i * 3 + ch];
        f.splats.push_back(p);
    }
    if (!rs.tiled) {
        f.lists.resize(1);
        f.lists[0].resize(f.splats.size());
        std::iota(f.lists[0].begin(), f.lists[0].end(), 0u);
        return f;
    }
    f.tiles_x = (rs.width + kTileSize - 1) / kTileSize;
    const std::size_t tiles_y = (rs.height + kTileSize - 1) / kTileSize;
    f.lists.resize(f.tiles_x * tiles_y);
    for (std::size_t k = 0; k < f.splats.size(); ++k) {
        const std::size_t i = f.splats[k].index;
        // axis-aligned extent of the 3-sigma ellipse, padded by one pixel
        const double rx = 3.0 * std::sqrt(s.cov2d[i * 3]) + 1.0;
        const double ry = 3.0 * std::sqrt(s.cov2d[i * 3 + 2]) + 1.0;
        const double x0 = f.splats[k].mx - rx, x1 = f.splats[k].mx + rx;
        const double y0 = f.splats[k].my - ry, y1 = f.splats[k].my + ry;
        if (x1 < 0.0 || y1 < 0.0 || x0 > static_cast<double>(rs.width) || y0 > static_cast<double>(rs.height)) continue;
        const auto tx0 = static_cast<std::size_t>(std::max(0.0, x0) / kTileSize);
        const auto ty0 = static_cast<std::size_t>(std::max(0.0, y0) / kTileSize);
        const std::size_t tx1 = std::min(f.tiles_x - 1, static_cast<std::size_t>(x1 / kTileSize));
        const std::size_t ty1 = std::min(tiles_y - 1, static_cast<std::size_t>(y1 / kTileSize));
        for (std::size_t ty = ty0; ty <= ty1; ++ty)
            for (std::size_t tx = tx0; tx <= tx1; ++tx) f.lists[ty * f.tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
    }
    return f;
}

const std::vector<std::uint32_t>& list_for(const Frame& f, std::size_t x, std::size_t y) {
    if (!f.tiled) return f.lists[0];
    return f.lists[(y / kTileSize) * f.tiles_x + x / kTileSize];
}

// Walks one pixel's contributors; `visit` sees each accepted one before T is updated.
template <typename Visit>
double composite(const Frame& f, const std::vector<std::uint32_t>& list, double px, double py, Visit&& visit) {
    double t = 1.0;
    for (std::uint32_t k : list) {
        if (t < kTransmittanceCutoff) break;
        const Prepared& p = f.splats[k];
        const double dx = px - p.mx, dy = py - p.my;
        const double power = -0.5 * (p.A * dx * dx + p.C * dy * dy) - p.B * dx * dy;
        if (-2.0 * power > kMahalanobisCutoff) continue;
        const double g = std::exp(power);
        const double raw = p.opacity * g;
        const double alpha = std::min(kMaxAlpha, raw);
        visit(Contribution{&p, alpha, g, dx, dy, t, raw > kMaxAlpha});
        t *= (1.0 - alpha);
    }
    return t;
}

void check_inputs(const SplatInputs& s, const RasterSettings& rs) {
    if (rs.width == 0 || rs.height == 0) throw DimensionError("rasterize: image size must be positive");
    if (s.mean2d.rank() != 2 || s.mean2d.size(1) != 2)
        throw DimensionError("rasterize: mean2d must be [N,2], got " + ad::shape_str(s.mean2d.shape()));
    const std::size_t n = s.mean2d.size(0);
    if (s.cov2d.shape() != Shape{n, 3}) throw DimensionError("rasterize: cov2d must be [N,3], got " + ad::shape_str(s.cov2d.shape()));
    if (s.opacity.shape() != Shape{n}) throw DimensionError("rasterize: opacity must be [N], got " + ad::shape_str(s.opacity.shape()));
    if (s.color.shape() != Shape{n, 3}) throw DimensionError("rasterize: color must be [N,3], got " + ad::shape_str(s.color.shape()));
    if (s.depth.size() != n) throw DimensionError("rasterize: depth must have N entries");
    if (!s.visible.empty() && s.visible.size() != n) throw DimensionError("rasterize: visible must be empty or have N entries");
}

}  // namespace

std::vector<std::size_t> depth_order(const std::vector<double>& depth, const std::vector<std::uint8_t>& visible) {
    std::vector<std::size_t> order;
    order.reserve(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i)
        if (visible.empty() || visible[i]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&depth](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
    return order;
}

RenderOutput rasterize_splats(const SplatInputs& s, const RasterSettings& rs) {
    check_inputs(s, rs);
    const std::size_t h = rs.height, w = rs.width, plane = h * w;
    auto frame = std::make_shared<Frame>(prepare(s, rs));

    std::vector<double> img(3 * plane), acc(plane);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double c[3] = {0.0, 0.0, 0.0};
            const double t = composite(*frame, list_for(*frame, x, y), static_cast<double>(x) + 0.5,
                                       static_cast<double>(y) + 0.5, [&c](const Contribution& k) {
                                           const double wgt = k.alpha * k.transmittance;
                                           for (int ch = 0; ch < 3; ++ch) c[ch] += k.splat->color[ch] * wgt;
                                       });
            for (int ch = 0; ch < 3; ++ch) img[ch * plane + y * w + x] = c[ch] + rs.background[ch] * t;
            acc[y * w + x] = 1.0 - t;
        }

    const bool track = tracking({&s.mean2d, &s.cov2d, &s.opacity, &s.color});
    RenderOutput out;
    out.color = make_result("rasterize", Shape{3, h, w}, std::move(img), track);
    out.alpha_accum = make_result("rasterize", Shape{1, h, w}, std::move(acc), false);
    if (!track) return out;

    active_tape()->record([frame, mn = s.mean2d.node(), cn = s.cov2d.node(), on = s.opacity.node(),
                           coln = s.color.node(), yn = out.color.node(), bg = rs.background, h, w] {
        if (yn->grad.empty()) return;
        const std::size_t n = mn->value.size() / 2, plane = h * w;
        std::vector<double> g_mean(n * 2, 0.0), g_conic(n * 3, 0.0), g_op(n, 0.0), g_col(n * 3, 0.0);
        std::vector<Contribution> stack;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t pix = y * w + x;
                const double g[3] = {yn->grad[pix], yn->grad[plane + pix], yn->grad[2 * plane + pix]};
                if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0) continue;
                stack.clear();
                const double t_final =
                    composite(*frame, list_for(*frame, x, y), static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5,
                              [&stack](const Contribution& k) { stack.push_back(k); });
                double suffix[3] = {bg[0] * t_final, bg[1] * t_final, bg[2] * t_final};
                for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
                    const Prepared& p = *it->splat;
                    const std::size_t i = p.index;
                    const double wgt = it->alpha * it->transmittance;
                    double d_alpha = 0.0;
                    for (int ch = 0; ch < 3; ++ch) {
                        g_col[i * 3 + ch] += g[ch] * wgt;
                        d_alpha += g[ch] * (p.color[ch] * it->transmittance - suffix[ch] / (1.0 - it->alpha));
                        suffix[ch] += p.color[ch] * wgt;
                    }
                    if (it->clamped) continue;
                    g_op[i] += d_alpha * it->gauss;
                    const double d_power = d_alpha * it->alpha;
                    const double dx = it->dx, dy = it->dy;
                    g_conic[i * 3] += d_power * (-0.5 * dx * dx);
                    g_conic[i * 3 + 1] += d_power * (-dx * dy);
                    g_conic[i * 3 + 2] += d_power * (-0.5 * dy * dy);
                    // d = p - mean
                    g_mean[i * 2] += d_power * (p.A * dx + p.B * dy);
                    g_mean[i * 2 + 1] += d_power * (p.B * dx + p.C * dy);
                }
            }
        if (wants_grad(mn)) {
            auto& gm = mn->ensure_grad();
            for (std::size_t k = 0; k < gm.size(); ++k) gm[k] += g_mean[k];
        }
        if (wants_grad(on)) {
            auto& go = on->ensure_grad();
            for (std::size_t k = 0; k < n; ++k) go[k] += g_op[k];
        }
        if (wants_grad(coln)) {
            auto& gc = coln->ensure_grad();
            for (std::size_t k = 0; k < gc.size(); ++k) gc[k] += g_col[k];
        }
        if (wants_grad(cn)) {
            auto& gv = cn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double gA = g_conic[i * 3], gB = g_conic[i * 3 + 1], gC = g_conic[i * 3 + 2];
                if (gA == 0.0 && gB == 0.0 && gC == 0.0) continue;
                const double a = cn->value[i * 3], b = cn->value[i * 3 + 1], c = cn->value[i * 3 + 2];
                const double det = a * c - b * b, d2 = det * det;
                gv[i * 3] += (gA * (-c * c) + gB * (b * c) + gC * (-b * b)) / d2;
                gv[i * 3 + 1] += (gA * (2.0 * b * c) + gB * (-(det + 2.0 * b * b)) + gC * (2.0 * a * b)) / d2;
                gv[i * 3 + 2] += (gA * (-b * b) + gB * (a * b) + gC * (-a * a)) / d2;
            }
        }
    });
    return out;
}

}  // namespace drs::splat
