#pragma once

// 8-bit PNG in and out. Images are [3,H,W] doubles in [0,1].

#include "derainsplat/ad/tensor.hpp"

#include <functional>
#include <string>

namespace drs::io {

using ad::Tensor;

/// Reads gray, gray+alpha, RGB or RGBA PNGs (alpha dropped, 16-bit reduced
/// to 8) as [3,H,W] with value/255. Throws ValidationError on missing or
/// malformed files.
Tensor read_png(const std::string& path);

/// Writes round(clamp(v,0,1)*255) as 8-bit RGB. Throws DimensionError unless
/// the image is [3,H,W] or [1,H,W] (written as gray replicated to RGB).
void write_png(const std::string& path, const Tensor& image);

/// Quantizes exactly as write_png does, without touching the disk.
Tensor quantize8(const Tensor& image);

/// Called with the path of every image read through read_png. Used to audit
/// which files a command touches; pass an empty function to clear.
using ReadObserver = std::function<void(const std::string&)>;
void set_read_observer(ReadObserver observer);

}  // namespace drs::io
