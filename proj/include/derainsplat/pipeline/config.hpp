#pragma once

// Run configuration for every CLI command, read from JSON. Every section and
// key is optional; omitted keys keep their defaults, unknown keys are
// rejected so typos do not pass silently.
//
//   {
//     "seed": 0,
//     "output_dir": "out",
//     "reconstruct": { "iterations", "flatland", "num_splats", "mask_warmup",
//                      "flat_initial_opacity", "background": [r,g,b],
//                      "use_enhancer", "use_mask", "use_channel_attention",
//                      "lr": { "means", "scaling", "sh", "mask", "opacity", "rotation" },
//                      "init": { "sh_degree", "initial_opacity", "neighbors" } },
//     "loss":     { "lambda_ssim", "lambda_reg", "lambda_reg_per_pixel",
//                   "ssim_window", "ssim_sigma", "c1", "c2" },
//     "mask":     { "feature_channels", "unet_channels", "cutoff",
//                   "zero_init_output", "output_init_std" },
//     "enhancer": { "levels", "encoder_blocks", "bottleneck_blocks",
//                   "decoder_blocks", "base_channels", "attention",
//                   "topk_fraction", "ffn_expansion" },
//     "train":    { "epochs", "lr", "batch_size", "crop" },
//     "rain":     { "mode", "gain", "blur_sigma_factor", "base_seed",
//                   "streaks": { "n": [lo,hi], "l": [lo,hi], "theta": [lo,hi], "w": [lo,hi] },
//                   "drop_count", "drop_radius": [lo,hi], "drop_blur_sigma" },
//     "synth":    { "views", "height", "width", "pairs", "texture_seed" }
//   }
//
// With "flatland": true and no "lr" section the flatland learning-rate
// preset is used.

#include "derainsplat/enhance/enhancer.hpp"
#include "derainsplat/pipeline/reconstruct.hpp"
#include "derainsplat/rain/rain.hpp"

#include <json.hpp>

#include <string>

namespace drs::pipeline {

struct SynthConfig {
    std::size_t views = 4;
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t pairs = 200;  // train-enhancer datasets
    std::uint64_t texture_seed = 0;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    ReconstructConfig reconstruct;
    enhance::EnhancerConfig enhancer;
    enhance::TrainConfig train;
    rain::SceneRainConfig rain;
    SynthConfig synth;

    /// Propagates `seed` into the sub-configs and validates them.
    void finalize();
};

/// Throws ValidationError on malformed JSON, unknown keys or wrong types.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& config);

}  // namespace drs::pipeline
