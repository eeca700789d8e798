#pragma once

// Evaluation metrics, loss logs and comparison grids.
//
// Metrics JSON ("derainsplat.metrics/1"):
//   {
//     "schema": "derainsplat.metrics/1",
//     "scene": "<name>",
//     "views": [ { "view_index": 0, "psnr": 31.2, "ssim": 0.94, "lpips": "n/a" }, ... ],
//     "mean": { "psnr": 31.2, "ssim": 0.94, "lpips": "n/a" }
//   }
// psnr is in dB and capped at 99 for identical images; ssim lies in [-1,1].

#include "derainsplat/pipeline/reconstruct.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace drs::pipeline {

inline constexpr const char* kMetricsSchema = "derainsplat.metrics/1";

struct ViewMetrics {
    std::size_t view_index = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct Metrics {
    std::string scene;
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

/// PSNR/SSIM of each render against its clean image.
Metrics evaluate_renders(const std::string& scene, const std::vector<Tensor>& renders,
                         const std::vector<Tensor>& clean);

nlohmann::json metrics_to_json(const Metrics& m);
/// Throws ValidationError describing the first deviation from the schema.
void validate_metrics_json(const nlohmann::json& j);

/// Columns: iteration,view,total,l_c,l_reg,mask_mean
void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history);

/// Lays out rows of equally sized images with a 2-pixel white gutter.
/// [1,H,W] masks are shown as gray.
Tensor comparison_grid(const std::vector<std::vector<Tensor>>& rows);

}  // namespace drs::pipeline
