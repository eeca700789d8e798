#pragma once

// Checkpoints stored as tensor archives (see io/archive.hpp).
//
// Enhancer: meta {"kind": "enhancer", "enhancer": {...}}, tensors named by
// parameter path.
// Reconstruction: meta {"kind": "reconstruction", "config": RunConfig JSON,
// "height", "width", "sh_degree", "iterations_done"}, tensors "scene.<name>",
// "mask.<name>" (when the mask is enabled) and "target.<k>" (the cached
// per-view loss targets).

#include "derainsplat/enhance/enhancer.hpp"
#include "derainsplat/pipeline/config.hpp"
#include "derainsplat/pipeline/reconstruct.hpp"

#include <string>

namespace drs::pipeline {

void save_enhancer(const std::string& path, const enhance::Enhancer& net);
/// Returns a frozen network. Throws ValidationError on a kind, config or
/// shape mismatch.
enhance::Enhancer load_enhancer(const std::string& path);

struct Checkpoint {
    RunConfig config;
    ReconstructResult result;
};

void save_reconstruction(const std::string& path, const ReconstructResult& result, const RunConfig& config);
Checkpoint load_reconstruction(const std::string& path);

}  // namespace drs::pipeline
