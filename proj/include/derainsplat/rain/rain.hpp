#pragma once

// Synthetic rain: motion-blurred streak layers and lens-adherent drops.
// Images are [C,H,W] tensors in [0,1]; single-channel layers are [1,H,W].

#include "derainsplat/ad/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drs::rain {

using ad::Tensor;

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct StreakParams {
    int n = 0;           // noise pixel count
    int l = 1;           // streak length, pixels
    double theta = 90.0; // degrees
    int w = 1;           // thickness, pixels
    std::uint64_t seed = 0;
};

struct StreakRanges {
    Range n{100, 300};
    Range l{20, 40};
    Range theta{40, 120};
    Range w{3, 7};
};

enum class RainMode { streak, drop, both };

RainMode parse_rain_mode(const std::string& s);
std::string rain_mode_name(RainMode m);

struct SceneRainConfig {
    RainMode mode = RainMode::streak;
    StreakRanges streaks;
    std::uint64_t base_seed = 0;
    double gain = 1.0;
    double blur_sigma_factor = 0.5;  // motion-kernel blur sigma = factor * w
    int drop_count = 0;
    Range drop_radius{3, 6};
    double drop_blur_sigma = 1.0;
};

/// Draws n, l, w as integers and theta as a real, uniformly within the
/// config's sub-ranges, from seed base_seed ^ view_index.
StreakParams sample_streak_params(const SceneRainConfig& config, std::uint64_t view_index);

/// Exactly params.n distinct pixels set to 1.
Tensor gen_noise_layer(const StreakParams& params, std::size_t height, std::size_t width);

/// Odd p x p kernel (p = l rounded up to odd) holding a line of length l at
/// angle theta, blurred to thickness w, normalized to sum 1.
Tensor build_motion_kernel(int l, double theta, int w, double blur_sigma_factor = 0.5);

struct StreakResult {
    Tensor rainy;  // [C,H,W]
    Tensor layer;  // [1,H,W]
};

StreakResult synth_streaks(const Tensor& background, const StreakParams& params, double gain = 1.0,
                           double blur_sigma_factor = 0.5);

struct Drop {
    double cx = 0.0, cy = 0.0;
    double semi_major = 0.0, semi_minor = 0.0;
    double angle = 0.0;  // radians
};

struct DropField {
    Tensor mask;        // [1,H,W], values in {0,1}
    Tensor appearance;  // [C,H,W], zero outside mask
    std::vector<Drop> drops;
};

/// Elliptical drops (aspect <= 1.3, area pi r^2) at random positions. Inside
/// each drop the background is seen through an inverting lens and blurred.
/// The layout depends only on (seed, H, W, count, radius range), so drops
/// stay fixed in image coordinates across views sharing a seed.
DropField gen_drop_field(std::uint64_t seed, const Tensor& background, int drop_count, Range radius_range,
                         double blur_sigma = 1.0);

/// (1 - M) * B + D per channel.
Tensor composite_drops(const Tensor& background, const DropField& field);

struct RainyView {
    Tensor image;        // [C,H,W]
    Tensor streaks;      // [1,H,W], zeros when streaks are off
    Tensor drop_mask;    // [1,H,W], zeros when drops are off
    StreakParams params;
    bool has_streaks = false;
    bool has_drops = false;
};

/// Applies the scene's rain to one view. Streak parameters vary per view
/// within the scene's sub-ranges; the drop layout is shared by all views.
RainyView apply_scene_rain(const SceneRainConfig& config, const Tensor& background, std::uint64_t view_index);

/// Pixels where synthesized rain is present: streak energy above the
/// threshold or inside a drop.
Tensor rain_pixel_mask(const RainyView& view, double streak_threshold = 0.02);

}  // namespace drs::rain
