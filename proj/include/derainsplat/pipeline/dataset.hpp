#pragma once

// Synthetic scenes and training pairs built from procedural textures and
// the rain synthesizer, plus their on-disk form (PNGs and a manifest).

#include "derainsplat/enhance/enhancer.hpp"
#include "derainsplat/pipeline/config.hpp"
#include "derainsplat/pipeline/manifest.hpp"
#include "derainsplat/pipeline/reconstruct.hpp"
#include "derainsplat/rain/rain.hpp"

#include <optional>
#include <string>
#include <vector>

namespace drs::pipeline {

struct SyntheticScene {
    std::string name;
    bool flatland = false;
    std::vector<Tensor> clean;              // per view [3,H,W]
    std::vector<rain::RainyView> rainy;     // per view, with ground-truth rain layers
    std::vector<std::optional<splat::Camera>> cameras;
    std::vector<splat::Point> points;       // 3D only: noisy copy of the true centers

    std::vector<TrainingView> training_views() const;
};

/// One procedural texture seen by every view; rain differs per view.
SyntheticScene synth_flatland_scene(const rain::SceneRainConfig& rain, const SynthConfig& synth);

/// Random colored Gaussians around the origin, viewed from a ring of cameras.
SyntheticScene synth_3d_scene(const rain::SceneRainConfig& rain, const SynthConfig& synth);

/// (rainy, clean) pairs on independent textures; pair i uses texture seed
/// seed*1000003 + i and rain base seed mix_seed(mix_seed(seed) + i).
std::vector<enhance::ImagePair> synth_pairs(const rain::SceneRainConfig& rain, std::size_t count, std::size_t height,
                                            std::size_t width, std::uint64_t seed);

/// Writes rainy/NNN.png, clean/NNN.png, points.json (3D) and manifest.json
/// under `dir`, returning the manifest as loaded back.
SceneManifest write_scene(const SyntheticScene& scene, const rain::SceneRainConfig& rain, const std::string& dir);

/// Rainy observations from a manifest. Never reads clean images.
std::vector<TrainingView> load_training_views(const SceneManifest& manifest);
/// Ground-truth images; throws ValidationError if any view lacks one.
std::vector<Tensor> load_clean_images(const SceneManifest& manifest);

/// Pair dataset on disk: pairs.json {"schema": "derainsplat.pairs/1",
/// "pairs": [{"rainy": path, "clean": path}]} next to the PNGs.
void write_pairs(const std::vector<enhance::ImagePair>& pairs, const std::string& dir);
std::vector<enhance::ImagePair> load_pairs(const std::string& pairs_json);

}  // namespace drs::pipeline
