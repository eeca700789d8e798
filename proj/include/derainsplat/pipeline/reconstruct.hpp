#pragma once

// Joint optimization of a splat scene and the mask predictor against the
// (optionally enhanced) rainy training views. Clean images never enter here.

#include "derainsplat/enhance/enhancer.hpp"
#include "derainsplat/freqmask/mask.hpp"
#include "derainsplat/loss/loss.hpp"
#include "derainsplat/splat/scene.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace drs::pipeline {

using ad::Tensor;

struct LearningRates {
    double means = 1.6e-4;  // flatland: multiplied by max(H, W)
    double scaling = 5e-4;
    double sh = 2.5e-3;     // flatland: colors
    double mask = 1e-3;     // encoder, attention MLP and U-Net alike
    double opacity = 0.05;
    double rotation = 1e-3;  // flatland: angles

    /// Rates used for image-plane scenes. Scales get 10x the 3D rate because
    /// desk runs are a few thousand steps rather than tens of thousands.
    static LearningRates flatland_defaults();
    void validate() const;
};

struct ReconstructConfig {
    std::size_t iterations = 5000;
    std::uint64_t seed = 0;
    bool flatland = false;
    /// Ablation switches: enhancer on targets, mask in the loss, channel
    /// attention inside the mask predictor.
    bool use_enhancer = true;
    bool use_mask = true;
    bool use_channel_attention = true;
    /// Flatland splat count, or random 3D init count when no points are given.
    std::size_t num_splats = 256;
    /// Iterations fitted with M = 0 before the mask enters the loss. Without
    /// it the early, uniformly large render error drives M to 1 everywhere,
    /// which zeroes the scene gradient and never recovers.
    std::size_t mask_warmup = 500;
    LearningRates lr;
    loss::LossConfig loss;
    freqmask::MaskConfig mask;
    splat::InitConfig init;
    double flat_initial_opacity = 0.1;
    std::array<double, 3> background{0.0, 0.0, 0.0};

    void validate() const;
};

struct TrainingView {
    std::size_t index = 0;
    Tensor observed;                      // rainy image [3,H,W]
    std::optional<splat::Camera> camera;  // absent in flatland scenes
};

/// Splat scene of either kind plus the frame it renders into.
struct SceneModel {
    bool flatland = false;
    splat::GaussianSet gaussians;
    splat::FlatSplats flat;
    std::size_t height = 0, width = 0;
    std::array<double, 3> background{0.0, 0.0, 0.0};

    /// Renders a view; the camera is required for 3D scenes and ignored in flatland.
    splat::RenderOutput render(const std::optional<splat::Camera>& camera) const;
    std::vector<std::pair<std::string, Tensor*>> parameters();
};

struct LossRecord {
    std::size_t iteration = 0;
    std::size_t view = 0;
    double total = 0.0;
    double l_c = 0.0;
    double l_reg = 0.0;
    double mask_mean = 0.0;
};

struct ReconstructResult {
    SceneModel scene;
    std::optional<freqmask::MaskPredictor> mask;
    std::vector<Tensor> targets;  // per view: enhanced (or observed) image
    std::vector<LossRecord> history;
    std::size_t iterations_done = 0;  // survives save/load; history does not
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Builds the initial scene: flatland splats with colors sampled from the
/// first target, or Gaussians from `points` (random in the init box if empty).
SceneModel initial_scene(const ReconstructConfig& cfg, const std::vector<TrainingView>& views,
                         const std::vector<Tensor>& targets, const std::vector<splat::Point>& points);

/// Per-view loss targets: enhancer output when enabled, else the observation.
std::vector<Tensor> prepare_targets(const std::vector<TrainingView>& views, const enhance::Enhancer* enhancer,
                                    bool use_enhancer);

/// Validates, computes the targets and builds the initial scene and mask
/// predictor without running any iteration.
ReconstructResult prepare_reconstruction(const std::vector<TrainingView>& views, const enhance::Enhancer* enhancer,
                                         const ReconstructConfig& cfg, const std::vector<splat::Point>& points = {});

/// prepare_reconstruction followed by optimize. Each iteration draws one
/// view uniformly with the seeded generator, predicts its mask from the
/// target, renders, and steps every parameter group on
/// total_loss(render, target, mask); the mask is held at zero for the first
/// `mask_warmup` iterations. Throws ValidationError when the enhancer is
/// enabled but not supplied, and NumericalError on divergence (parameters
/// are left at their last finite update).
ReconstructResult reconstruct(const std::vector<TrainingView>& views, const enhance::Enhancer* enhancer,
                              const ReconstructConfig& cfg, const std::vector<splat::Point>& points = {},
                              const ProgressFn& progress = {});

/// The optimization loop on a prepared state. Calling it again continues
/// from the current parameters with fresh optimizer moments.
void optimize(ReconstructResult& result, const std::vector<TrainingView>& views, const ReconstructConfig& cfg,
              const ProgressFn& progress = {});

/// Mask for view k of a finished run; zeros when masking is disabled.
Tensor predict_mask(const ReconstructResult& result, std::size_t view);

}  // namespace drs::pipeline
