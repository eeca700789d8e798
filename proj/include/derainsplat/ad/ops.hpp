#pragma once

// Differentiable tensor ops. Image-like tensors are laid out [C,H,W]; token
// matrices are [N,D]. Apart from the explicit expand_* ops there is no
// broadcasting: binary elementwise ops require identical shapes.

#include "derainsplat/ad/tensor.hpp"

#include <cstddef>

namespace drs::ad {

enum class Padding { zero, reflect };

/// Complex tensor as paired real/imaginary planes of identical shape.
struct ComplexTensor {
    Tensor re;
    Tensor im;
};

// --- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
/// s - x
Tensor rsub_scalar(double s, const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

// --- reductions (return rank-0 tensors) --------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean |a - b|
Tensor l1(const Tensor& a, const Tensor& b);
/// mean (a - b)^2
Tensor l2(const Tensor& a, const Tensor& b);

// --- shape -------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
/// [M,N] -> [N,M]
Tensor transpose(const Tensor& x);
/// [Ca,H,W] ++ [Cb,H,W] -> [Ca+Cb,H,W]
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// [1,H,W] -> [C,H,W]
Tensor expand_channels(const Tensor& x, std::size_t channels);
/// [C,1,1] -> [C,H,W]
Tensor expand_spatial(const Tensor& x, std::size_t height, std::size_t width);
Tensor pad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right, Padding mode);
Tensor crop2d(const Tensor& x, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
/// [C,H,W] -> [C,1,1]
Tensor global_avg_pool(const Tensor& x);

// --- dense linear algebra ------------------------------------------------------
/// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [N,in], weight [out,in], bias [out] (may be undefined) -> [N,out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Normalizes each row of x [N,D] over D, then applies gamma/beta [D].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
/// Channel-last layer norm on a [C,H,W] map: normalizes over C at every pixel.
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
/// Row softmax restricted to the k largest logits of each row (ties broken by
/// lower column index); all other entries are exactly zero and receive no
/// gradient. k equal to the row length is plain softmax.
Tensor topk_softmax_rows(const Tensor& logits, std::size_t k);
Tensor softmax_rows(const Tensor& logits);

// --- convolution and resampling -------------------------------------------
struct Conv2dOptions {
    std::size_t stride = 1;
    Padding padding = Padding::zero;
};

/// Cross-correlation of x [C_in,H,W] with kernel [C_out,C_in,kh,kw] (odd kh,kw),
/// padded by kh/2, kw/2 on each side. Output [C_out, ceil-ish (H+2p-kh)/s+1, ...].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias = {}, Conv2dOptions opts = {});
/// Per-channel cross-correlation, x [C,H,W] with kernel [C,kh,kw]; stride 1, same size.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias = {},
                        Padding padding = Padding::zero);
/// Separable normalized Gaussian window (odd size) with zero padding, per channel.
Tensor gaussian_blur(const Tensor& x, double sigma, std::size_t window);
/// Bilinear resampling of [C,H,W] to [C,height,width], align_corners = false
/// (half-pixel centers, source coordinates clamped at the border).
Tensor bilinear_resize(const Tensor& x, std::size_t height, std::size_t width);

// --- spectral ------------------------------------------------------------------
/// Per-channel 2D DFT of [C,H,W]: X[u,v] = sum_x sum_y x[x,y] exp(-2 pi i (ux/H + vy/W)).
ComplexTensor fft2(const Tensor& x);
ComplexTensor fft2(const ComplexTensor& x);
/// Per-channel inverse 2D DFT with 1/(HW) normalization.
ComplexTensor ifft2(const ComplexTensor& x);
/// |z| elementwise; gradient defined as zero at z = 0.
Tensor complex_abs(const ComplexTensor& z);

}  // namespace drs::ad
