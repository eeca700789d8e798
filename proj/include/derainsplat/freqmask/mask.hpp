#pragma once

// Unsupervised occlusion-mask prediction from an (enhanced) image:
// convolutional features, spectral high-pass filtering, channel attention
// from the high-passed features, channel modulation of the raw features and
// a small U-Net producing a sigmoid mask resized to the image.

#include "derainsplat/ad/params.hpp"
#include "derainsplat/ad/tensor.hpp"

#include <cstddef>
#include <cstdint>

namespace drs::freqmask {

using ad::ParamStore;
using ad::Tensor;

/// Ideal radial high-pass multiplier [1,H,W]: 1 where the normalized radial
/// frequency exceeds `cutoff` (fraction of Nyquist), 0 elsewhere; DC is 0.
Tensor ideal_highpass(std::size_t height, std::size_t width, double cutoff);

/// True if T[u,v] == T[-u mod H, -v mod W] everywhere and T[0,0] == 0.
bool is_conjugate_symmetric(const Tensor& filter);

/// Per channel: fft2, multiply by the filter, ifft2, keep the real part.
/// Throws NumericalError if the discarded imaginary part exceeds 1e-9.
Tensor spectral_highpass(const Tensor& features, const Tensor& filter);

struct AttentionMlp {
    Tensor w1, b1;  // [C/2,C], [C/2]
    Tensor w2, b2;  // [C,C/2], [C]
};

/// sigmoid(MLP(mean |F_HF| per channel)) as [C,1,1].
Tensor channel_attention(const Tensor& highpassed, const AttentionMlp& mlp);

/// F[c,i,j] * A[c].
Tensor modulate(const Tensor& features, const Tensor& scores);

struct MaskConfig {
    std::size_t feature_channels = 16;
    std::size_t unet_channels = 16;
    double cutoff = 0.1;
    bool use_channel_attention = true;
    /// Zero the U-Net output layer so a fresh predictor outputs 0.5 everywhere.
    bool zero_init_output = false;
    double output_init_std = 0.01;

    void validate() const;
};

struct MaskOutputs {
    Tensor features;   // F  [C,H',W']
    Tensor highpass;   // F_HF (undefined without channel attention)
    Tensor scores;     // A  [C,1,1] (undefined without channel attention)
    Tensor modulated;  // F' [C,H',W']
    Tensor raw_mask;   // [1,H',W']
    Tensor mask;       // [1,H,W]
};

class MaskPredictor {
public:
    MaskPredictor(MaskConfig config, std::uint64_t seed);

    const MaskConfig& config() const noexcept { return config_; }
    ParamStore& params() noexcept { return params_; }
    const ParamStore& params() const noexcept { return params_; }

    /// Three-layer strided encoder, output [C, ceil(H/4), ceil(W/4)].
    /// Throws DimensionError if H or W is below 4.
    Tensor encode(const Tensor& image) const;
    AttentionMlp mlp() const;
    /// U-Net on modulated features, sigmoid, bilinear resize to (height, width).
    Tensor predict(const Tensor& modulated, std::size_t height, std::size_t width, Tensor* raw = nullptr) const;

    /// Full chain on an image [3,H,W]; the mask matches the image size.
    MaskOutputs forward(const Tensor& image) const;

private:
    Tensor conv(const Tensor& x, const char* name, std::size_t stride = 1) const;

    MaskConfig config_;
    ParamStore params_;
};

}  // namespace drs::freqmask
