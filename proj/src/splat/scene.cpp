#include "derainsplat/splat/scene.hpp"

#include "derainsplat/ad/ops.hpp"
#include "derainsplat/common/error.hpp"
#include "derainsplat/common/random.hpp"

#include <algorithm>
#include <cmath>

namespace drs::splat {

namespace {

constexpr double kShC0 = 0.28209479177387814;

double logit(double p) { return std::log(p / (1.0 - p)); }

void expect_shape(const Tensor& t, const ad::Shape& s, const char* name) {
    if (!t.defined() || t.shape() != s)
        throw DimensionError(std::string(name) + ": expected shape " + ad::shape_str(s) + ", got " +
                             (t.defined() ? ad::shape_str(t.shape()) : std::string("undefined")));
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> GaussianSet::parameters() {
    return {{"means", &means},
            {"rotations", &rotations},
            {"log_scales", &log_scales},
            {"opacity_logits", &opacity_logits},
            {"sh", &sh}};
}

void GaussianSet::normalize_rotations() {
    auto q = rotations.mutable_values();
    for (std::size_t i = 0; i + 3 < q.size(); i += 4) {
        const double n = std::sqrt(q[i] * q[i] + q[i + 1] * q[i + 1] + q[i + 2] * q[i + 2] + q[i + 3] * q[i + 3]);
        if (!(n > 0.0)) throw NumericalError("normalize_rotations: zero quaternion");
        for (int k = 0; k < 4; ++k) q[i + k] /= n;
    }
}

void GaussianSet::validate() const {
    const std::size_t n = size();
    if (sh_degree < 0 || sh_degree > 2) throw ValidationError("GaussianSet: SH degree must be 0..2");
    expect_shape(means, {n, 3}, "means");
    expect_shape(rotations, {n, 4}, "rotations");
    expect_shape(log_scales, {n, 3}, "log_scales");
    expect_shape(opacity_logits, {n}, "opacity_logits");
    expect_shape(sh, {n, sh_coeff_count(sh_degree), 3}, "sh");
}

std::vector<std::pair<std::string, Tensor*>> FlatSplats::parameters() {
    return {{"means", &means},
            {"log_scales", &log_scales},
            {"angles", &angles},
            {"opacity_logits", &opacity_logits},
            {"colors", &colors}};
}

void FlatSplats::validate() const {
    const std::size_t n = size();
    expect_shape(means, {n, 2}, "means");
    expect_shape(log_scales, {n, 2}, "log_scales");
    expect_shape(angles, {n}, "angles");
    expect_shape(opacity_logits, {n}, "opacity_logits");
    expect_shape(colors, {n, 3}, "colors");
}

std::vector<double> nearest_neighbor_scales(const std::vector<Vec3>& pts, int k) {
    const std::size_t n = pts.size();
    std::vector<double> out(n, 1.0);
    if (n < 2 || k < 1) return out;
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1], dz = pts[i][2] - pts[j][2];
            d.push_back(dx * dx + dy * dy + dz * dz);
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
        double acc = 0.0;
        for (std::size_t m = 0; m < kk; ++m) acc += std::sqrt(d[m]);
        out[i] = std::max(acc / static_cast<double>(kk), 1e-7);
    }
    return out;
}

GaussianSet init_gaussians(const std::vector<Point>& points, const InitConfig& cfg) {
    if (points.empty()) throw ValidationError("init_gaussians: empty point cloud");
    if (cfg.sh_degree < 0 || cfg.sh_degree > 2) throw ValidationError("init_gaussians: SH degree must be 0..2");
    if (!(cfg.initial_opacity > 0.0 && cfg.initial_opacity < 1.0))
        throw ValidationError("init_gaussians: initial opacity must lie in (0,1)");
    const std::size_t n = points.size(), k = sh_coeff_count(cfg.sh_degree);
    std::vector<Vec3> pos;
    pos.reserve(n);
    for (const auto& p : points) pos.push_back(p.position);
    const auto nn = nearest_neighbor_scales(pos, cfg.neighbors);

    std::vector<double> means(n * 3), rot(n * 4, 0.0), ls(n * 3), op(n, logit(cfg.initial_opacity)), sh(n * k * 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            means[i * 3 + a] = points[i].position[a];
            ls[i * 3 + a] = std::log(nn[i]);
            sh[(i * k) * 3 + a] = (points[i].color[a] - 0.5) / kShC0;
        }
        rot[i * 4] = 1.0;
    }
    GaussianSet g;
    g.means = Tensor({n, 3}, std::move(means));
    g.rotations = Tensor({n, 4}, std::move(rot));
    g.log_scales = Tensor({n, 3}, std::move(ls));
    g.opacity_logits = Tensor({n}, std::move(op));
    g.sh = Tensor({n, k, 3}, std::move(sh));
    g.sh_degree = cfg.sh_degree;
    return g;
}

GaussianSet init_gaussians_random(std::size_t count, std::uint64_t seed, const InitConfig& cfg) {
    if (count == 0) throw ValidationError("init_gaussians: count must be positive");
    Rng rng(mix_seed(seed));
    std::vector<Point> pts(count);
    for (auto& p : pts)
        for (int a = 0; a < 3; ++a) p.position[a] = rng.uniform(cfg.box_min[a], cfg.box_max[a]);
    return init_gaussians(pts, cfg);
}

FlatSplats init_flat_splats(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                            const FlatInitConfig& cfg) {
    if (count == 0) throw ValidationError("init_flat_splats: count must be positive");
    if (height == 0 || width == 0) throw ValidationError("init_flat_splats: image size must be positive");
    if (!(cfg.initial_opacity > 0.0 && cfg.initial_opacity < 1.0))
        throw ValidationError("init_flat_splats: initial opacity must lie in (0,1)");
    const bool sample = cfg.color_source.defined();
    if (sample && cfg.color_source.shape() != ad::Shape{3, height, width})
        throw DimensionError("init_flat_splats: color source must be [3,H,W]");
    Rng rng(mix_seed(seed));
    std::vector<Vec3> pos(count);
    std::vector<double> means(count * 2), colors(count * 3, 0.5);
    for (std::size_t i = 0; i < count; ++i) {
        const double x = rng.uniform(0.0, static_cast<double>(width));
        const double y = rng.uniform(0.0, static_cast<double>(height));
        means[i * 2] = x;
        means[i * 2 + 1] = y;
        pos[i] = {x, y, 0.0};
        if (sample) {
            const auto px = std::min(static_cast<std::size_t>(x), width - 1);
            const auto py = std::min(static_cast<std::size_t>(y), height - 1);
            for (std::size_t c = 0; c < 3; ++c) colors[i * 3 + c] = cfg.color_source[(c * height + py) * width + px];
        }
    }
    const auto nn = nearest_neighbor_scales(pos, 3);
    std::vector<double> ls(count * 2);
    for (std::size_t i = 0; i < count; ++i) ls[i * 2] = ls[i * 2 + 1] = std::log(nn[i]);
    FlatSplats f;
    f.means = Tensor({count, 2}, std::move(means));
    f.log_scales = Tensor({count, 2}, std::move(ls));
    f.angles = Tensor({count}, 0.0);
    f.opacity_logits = Tensor({count}, logit(cfg.initial_opacity));
    f.colors = Tensor({count, 3}, std::move(colors));
    return f;
}

RenderOutput render(const GaussianSet& scene, const Camera& cam, const RasterSettings& settings) {
    cam.validate();
    scene.validate();
    RasterSettings rs = settings;
    rs.width = cam.width;
    rs.height = cam.height;
    Tensor cov3 = covariance3d_batch(scene.rotations, scene.log_scales);
    ProjectedBatch proj = project_batch(scene.means, cov3, cam);
    SplatInputs in;
    in.mean2d = proj.mean2d;
    in.cov2d = proj.cov2d;
    in.opacity = ad::sigmoid(scene.opacity_logits);
    in.color = sh_colors(scene.sh, scene.means, cam.center(), scene.sh_degree);
    in.depth = std::move(proj.depth);
    in.visible = std::move(proj.visible);
    return rasterize_splats(in, rs);
}

RenderOutput render_flatland(const FlatSplats& splats, const RasterSettings& settings) {
    splats.validate();
    const std::size_t n = splats.size();
    SplatInputs in;
    in.mean2d = splats.means;
    in.cov2d = flat_covariance(splats.log_scales, splats.angles);
    in.opacity = ad::sigmoid(splats.opacity_logits);
    in.color = splats.colors;
    in.depth.resize(n);
    for (std::size_t i = 0; i < n; ++i) in.depth[i] = static_cast<double>(i);
    return rasterize_splats(in, settings);
}

}  // namespace drs::splat
