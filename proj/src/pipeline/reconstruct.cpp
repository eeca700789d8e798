#include "derainsplat/pipeline/reconstruct.hpp"

#include "derainsplat/ad/ops.hpp"
#include "derainsplat/ad/optim.hpp"
#include "derainsplat/common/error.hpp"
#include "derainsplat/common/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drs::pipeline {

using namespace drs::ad;

LearningRates LearningRates::flatland_defaults() {
    LearningRates r;
    r.scaling = 5e-3;
    return r;
}

void LearningRates::validate() const {
    for (double v : {means, scaling, sh, mask, opacity, rotation})
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("learning rates must be positive");
}

void ReconstructConfig::validate() const {
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (num_splats < 1) throw ValidationError("num_splats must be >= 1");
    if (!(flat_initial_opacity > 0.0 && flat_initial_opacity < 1.0))
        throw ValidationError("flat_initial_opacity must lie in (0,1)");
    lr.validate();
    loss.validate();
    mask.validate();
}

splat::RenderOutput SceneModel::render(const std::optional<splat::Camera>& camera) const {
    splat::RasterSettings rs;
    rs.width = width;
    rs.height = height;
    rs.background = background;
    if (flatland) return splat::render_flatland(flat, rs);
    if (!camera) throw ValidationError("render: 3D scenes need a camera");
    return splat::render(gaussians, *camera, rs);
}

std::vector<std::pair<std::string, Tensor*>> SceneModel::parameters() {
    return flatland ? flat.parameters() : gaussians.parameters();
}

namespace {

void check_views(const std::vector<TrainingView>& views, bool flatland) {
    if (views.empty()) throw ValidationError("reconstruct: no training views");
    const Shape& s = views.front().observed.shape();
    if (s.size() != 3 || s[0] != 3) throw DimensionError("reconstruct: views must be [3,H,W] images");
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (views[i].observed.shape() != s)
            throw DimensionError("reconstruct: view " + std::to_string(views[i].index) + " has shape " +
                                 shape_str(views[i].observed.shape()) + ", expected " + shape_str(s));
        if (!flatland && !views[i].camera)
            throw ValidationError("reconstruct: view " + std::to_string(views[i].index) + " has no camera");
        if (!flatland && (views[i].camera->width != s[2] || views[i].camera->height != s[1]))
            throw ValidationError("reconstruct: camera of view " + std::to_string(views[i].index) +
                                  " does not match the image size");
    }
}

}  // namespace

std::vector<Tensor> prepare_targets(const std::vector<TrainingView>& views, const enhance::Enhancer* enhancer,
                                    bool use_enhancer) {
    if (use_enhancer && !enhancer)
        throw ValidationError("reconstruct: enhancer weights are required unless enhancement is disabled");
    std::vector<Tensor> out;
    out.reserve(views.size());
    for (const auto& v : views) out.push_back(use_enhancer ? enhancer->enhance(v.observed) : v.observed.detach());
    return out;
}

SceneModel initial_scene(const ReconstructConfig& cfg, const std::vector<TrainingView>& views,
                         const std::vector<Tensor>& targets, const std::vector<splat::Point>& points) {
    SceneModel m;
    m.flatland = cfg.flatland;
    m.height = views.front().observed.size(1);
    m.width = views.front().observed.size(2);
    m.background = cfg.background;
    const std::uint64_t seed = mix_seed(cfg.seed ^ 0x7363656e65ULL);
    if (cfg.flatland) {
        splat::FlatInitConfig fi;
        fi.initial_opacity = cfg.flat_initial_opacity;
        fi.color_source = targets.front();
        m.flat = splat::init_flat_splats(cfg.num_splats, m.height, m.width, seed, fi);
    } else if (points.empty()) {
        m.gaussians = splat::init_gaussians_random(cfg.num_splats, seed, cfg.init);
    } else {
        m.gaussians = splat::init_gaussians(points, cfg.init);
    }
    return m;
}

ReconstructResult prepare_reconstruction(const std::vector<TrainingView>& views, const enhance::Enhancer* enhancer,
                                         const ReconstructConfig& cfg, const std::vector<splat::Point>& points) {
    cfg.validate();
    check_views(views, cfg.flatland);
    if (enhancer && cfg.use_enhancer && !enhancer->frozen())
        throw ValidationError("reconstruct: the enhancer must be frozen");
    ReconstructResult r;
    r.targets = prepare_targets(views, enhancer, cfg.use_enhancer);
    r.scene = initial_scene(cfg, views, r.targets, points);
    if (cfg.use_mask) {
        freqmask::MaskConfig mc = cfg.mask;
        mc.use_channel_attention = cfg.use_channel_attention;
        r.mask.emplace(mc, mix_seed(cfg.seed ^ 0x6d61736b6e6574ULL));
    }
    return r;
}

ReconstructResult reconstruct(const std::vector<TrainingView>& views, const enhance::Enhancer* enhancer,
                              const ReconstructConfig& cfg, const std::vector<splat::Point>& points,
                              const ProgressFn& progress) {
    ReconstructResult r = prepare_reconstruction(views, enhancer, cfg, points);
    optimize(r, views, cfg, progress);
    return r;
}

void optimize(ReconstructResult& r, const std::vector<TrainingView>& views, const ReconstructConfig& cfg,
              const ProgressFn& progress) {
    cfg.validate();
    check_views(views, cfg.flatland);
    if (r.targets.size() != views.size()) throw ValidationError("optimize: one target per view required");
    SceneModel& scene = r.scene;
    for (auto& [name, t] : scene.parameters()) t->set_requires_grad();

    Adam opt;
    if (scene.flatland) {
        const double extent = static_cast<double>(std::max(scene.height, scene.width));
        opt.add_group("means", {scene.flat.means}, cfg.lr.means * extent);
        opt.add_group("scaling", {scene.flat.log_scales}, cfg.lr.scaling);
        opt.add_group("rotation", {scene.flat.angles}, cfg.lr.rotation);
        opt.add_group("opacity", {scene.flat.opacity_logits}, cfg.lr.opacity);
        opt.add_group("sh", {scene.flat.colors}, cfg.lr.sh);
    } else {
        opt.add_group("means", {scene.gaussians.means}, cfg.lr.means);
        opt.add_group("scaling", {scene.gaussians.log_scales}, cfg.lr.scaling);
        opt.add_group("rotation", {scene.gaussians.rotations}, cfg.lr.rotation);
        opt.add_group("opacity", {scene.gaussians.opacity_logits}, cfg.lr.opacity);
        opt.add_group("sh", {scene.gaussians.sh}, cfg.lr.sh);
    }
    // Separate optimizer so its bias correction starts when the mask does.
    Adam mask_opt;
    if (r.mask) {
        std::vector<Tensor> used;
        for (const auto& [name, t] : r.mask->params().entries())
            if (cfg.use_channel_attention || name.rfind("mlp.", 0) != 0) used.push_back(*t);
        mask_opt.add_group("mask", used, cfg.lr.mask);
    }

    const std::size_t h = scene.height, w = scene.width;
    const Tensor no_mask(Shape{1, h, w}, 0.0);
    Rng rng(mix_seed(cfg.seed ^ 0x76696577ULL));
    const std::size_t start = r.iterations_done;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const std::size_t k = rng.below(views.size());
        const bool masked = r.mask && start + it >= cfg.mask_warmup;
        opt.zero_grad();
        mask_opt.zero_grad();
        LossRecord rec;
        {
            Tape tape;
            TapeScope scope(tape);
            const Tensor mask = masked ? r.mask->forward(r.targets[k]).mask : no_mask;
            const Tensor rendered = scene.render(views[k].camera).color;
            const loss::LossBreakdown lb = loss::total_loss(rendered, r.targets[k], mask, cfg.loss);
            if (!std::isfinite(lb.total_value))
                throw NumericalError("reconstruct: loss diverged at iteration " + std::to_string(start + it + 1));
            tape.backward(lb.total);
            rec.total = lb.total_value;
            rec.l_c = lb.l_c;
            rec.l_reg = lb.l_reg;
            double ms = 0.0;
            for (double v : mask.values()) ms += v;
            rec.mask_mean = ms / static_cast<double>(mask.numel());
        }
        opt.step();
        if (masked) mask_opt.step();
        if (!scene.flatland) scene.gaussians.normalize_rotations();
        rec.iteration = start + it + 1;
        rec.view = views[k].index;
        r.history.push_back(rec);
        r.iterations_done = rec.iteration;
        if (progress) progress(rec);
    }
    opt.zero_grad();
    mask_opt.zero_grad();
}

Tensor predict_mask(const ReconstructResult& r, std::size_t view) {
    if (view >= r.targets.size()) throw ValidationError("predict_mask: view out of range");
    if (!r.mask) return Tensor(Shape{1, r.targets[view].size(1), r.targets[view].size(2)}, 0.0);
    NoGradScope no_grad;
    return r.mask->forward(r.targets[view]).mask;
}

}  // namespace drs::pipeline
