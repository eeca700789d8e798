#pragma once

#include "derainsplat/ad/tensor.hpp"

#include <cstddef>
#include <cstdint>

namespace drs::rain {

/// Seeded procedural RGB image [3,H,W] with values in [0.05, 0.85]: a colour
/// gradient overlaid with a few flat-coloured discs and rectangles and a faint
/// sinusoidal pattern. Used as clean ground truth for synthetic scenes.
ad::Tensor procedural_texture(std::uint64_t seed, std::size_t height, std::size_t width);

}  // namespace drs::rain
