#pragma once

// Masked reconstruction objective and image-quality metrics. Images are
// [C,H,W] in [0,1]; masks are [1,H,W] in [0,1] and are broadcast over
// channels.

#include "derainsplat/ad/tensor.hpp"

#include <cstddef>

namespace drs::loss {

using ad::Tensor;

struct LossConfig {
    double lambda_ssim = 0.2;
    /// Negative selects lambda_reg_per_pixel / (H*W) for the image being scored.
    double lambda_reg = -1.0;
    double lambda_reg_per_pixel = 0.5;
    std::size_t ssim_window = 11;
    double ssim_sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;

    void validate() const;
    double resolved_lambda_reg(std::size_t height, std::size_t width) const;
};

/// Per-pixel SSIM with a separable Gaussian window and zero padding.
Tensor ssim_map(const Tensor& a, const Tensor& b, const LossConfig& cfg = {});

/// (1-ls) * mean((1-M)|R-T|) + ls * mean((1-M)(1-SSIM_map(R,T)))
Tensor masked_photometric_loss(const Tensor& rendered, const Tensor& target, const Tensor& mask,
                               const LossConfig& cfg = {});

/// Sum of squared mask values.
Tensor mask_reg(const Tensor& mask);

struct LossBreakdown {
    Tensor total;  // differentiable
    double l_c = 0.0;
    double l1_term = 0.0;    // (1-ls) * masked L1 part of l_c
    double ssim_term = 0.0;  // ls * masked DSSIM part of l_c
    double l_reg = 0.0;
    double lambda_reg = 0.0;
    double total_value = 0.0;
};

/// l_c + lambda_reg * l_reg.
LossBreakdown total_loss(const Tensor& rendered, const Tensor& target, const Tensor& mask, const LossConfig& cfg = {});

/// 10 log10(peak^2 / MSE), capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Mean of the SSIM map over all channels and pixels.
double ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg = {});

inline constexpr double kPsnrCap = 99.0;

}  // namespace drs::loss
