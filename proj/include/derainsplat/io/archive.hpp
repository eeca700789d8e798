#pragma once

// Binary tensor archive used for checkpoints.
//
// Layout: "DRSARCH\0", u32 version, u64 header length, UTF-8 JSON header,
// then raw little-endian f64 data. The header holds caller metadata under
// "meta" and, per tensor, {"name", "shape", "offset"} with offsets counted in
// doubles from the start of the data block. Values round-trip bit-exactly.

#include "derainsplat/ad/tensor.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace drs::io {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, ad::Tensor> tensors;

    /// Throws ValidationError naming the missing entry.
    const ad::Tensor& at(const std::string& name) const;
};

void save_archive(const std::string& path, const Archive& archive);

/// Throws ValidationError on a bad magic, unknown version, truncated data
/// or an inconsistent index.
Archive load_archive(const std::string& path);

}  // namespace drs::io
