#include "derainsplat/ad/ops.hpp"
#include "derainsplat/simd/kernels.hpp"
#include "derainsplat/ad/op_support.hpp"

#include <cmath>

namespace drs::ad {

using detail::make_result;
using detail::require_rank;
using detail::tracking;
using detail::wants_grad;

namespace {

struct PadSpec {
    std::size_t top = 0, bottom = 0, left = 0, right = 0;
    Padding mode = Padding::zero;
};

// Source index for padded coordinate i (already shifted into the unpadded
// frame), or -1 when it falls on zero padding. Reflection excludes the edge.
long source_index(long i, long n, Padding mode) {
    if (i >= 0 && i < n) return i;
    if (mode == Padding::zero) return -1;
    const long period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

void check_pad(const char* op, std::size_t h, std::size_t w, const PadSpec& p) {
    if (p.mode == Padding::reflect &&
        (p.top >= h || p.bottom >= h || p.left >= w || p.right >= w)) {
        throw DimensionError(std::string(op) + ": reflect padding needs pad < size on axes 1,2 (H=" +
                             std::to_string(h) + ", W=" + std::to_string(w) + ")");
    }
}

std::vector<double> pad_planes(const double* x, std::size_t c, std::size_t h, std::size_t w, const PadSpec& p) {
    const std::size_t hp = h + p.top + p.bottom, wp = w + p.left + p.right;
    std::vector<double> out(c * hp * wp, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < hp; ++y) {
            const long sy = source_index(static_cast<long>(y) - static_cast<long>(p.top), static_cast<long>(h), p.mode);
            if (sy < 0) continue;
            for (std::size_t xx = 0; xx < wp; ++xx) {
                const long sx =
                    source_index(static_cast<long>(xx) - static_cast<long>(p.left), static_cast<long>(w), p.mode);
                if (sx < 0) continue;
                out[(ch * hp + y) * wp + xx] = x[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
            }
        }
    return out;
}

// Adjoint of pad_planes: folds padded-frame gradients back onto the source.
void fold_padding(const std::vector<double>& gpad, double* gx, std::size_t c, std::size_t h, std::size_t w,
                  const PadSpec& p) {
    const std::size_t hp = h + p.top + p.bottom, wp = w + p.left + p.right;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < hp; ++y) {
            const long sy = source_index(static_cast<long>(y) - static_cast<long>(p.top), static_cast<long>(h), p.mode);
            if (sy < 0) continue;
            for (std::size_t xx = 0; xx < wp; ++xx) {
                const long sx =
                    source_index(static_cast<long>(xx) - static_cast<long>(p.left), static_cast<long>(w), p.mode);
                if (sx < 0) continue;
                gx[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] += gpad[(ch * hp + y) * wp + xx];
            }
        }
}

struct ConvGeometry {
    std::size_t cin, cout, h, w, kh, kw, stride, hp, wp, ho, wo;
    PadSpec pad;
    bool depthwise;
};

// Correlates padded planes with the kernel. For depthwise, channel c only
// sees kernel slice c.
void conv_forward(const ConvGeometry& g, const double* padded, const double* kernel, const double* bias, double* out) {
    const auto& k = simd::kernels();
    const std::size_t out_plane = g.ho * g.wo;
    std::vector<double> row(g.wo);
    for (std::size_t co = 0; co < g.cout; ++co) {
        double* o = out + co * out_plane;
        std::fill(o, o + out_plane, bias ? bias[co] : 0.0);
        const std::size_t ci_begin = g.depthwise ? co : 0;
        const std::size_t ci_end = g.depthwise ? co + 1 : g.cin;
        for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
            const double* src = padded + ci * g.hp * g.wp;
            const double* wk = kernel + (g.depthwise ? co : co * g.cin + ci) * g.kh * g.kw;
            for (std::size_t ky = 0; ky < g.kh; ++ky)
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const double wv = wk[ky * g.kw + kx];
                    if (wv == 0.0) continue;
                    for (std::size_t y = 0; y < g.ho; ++y) {
                        const double* in_row = src + (y * g.stride + ky) * g.wp + kx;
                        if (g.stride == 1) {
                            k.axpy(wv, in_row, o + y * g.wo, g.wo);
                        } else {
                            for (std::size_t x = 0; x < g.wo; ++x) row[x] = in_row[x * g.stride];
                            k.axpy(wv, row.data(), o + y * g.wo, g.wo);
                        }
                    }
                }
        }
    }
}

void conv_backward(const ConvGeometry& g, const double* padded, const double* kernel, const double* gout,
                   double* gpad, double* gkernel, double* gbias) {
    const auto& k = simd::kernels();
    const std::size_t out_plane = g.ho * g.wo;
    std::vector<double> row(g.wo);
    for (std::size_t co = 0; co < g.cout; ++co) {
        const double* go = gout + co * out_plane;
        if (gbias) gbias[co] += k.sum(go, out_plane);
        const std::size_t ci_begin = g.depthwise ? co : 0;
        const std::size_t ci_end = g.depthwise ? co + 1 : g.cin;
        for (std::size_t ci = ci_begin; ci < ci_end; ++ci) {
            const double* src = padded + ci * g.hp * g.wp;
            double* gsrc = gpad ? gpad + ci * g.hp * g.wp : nullptr;
            const std::size_t widx = (g.depthwise ? co : co * g.cin + ci) * g.kh * g.kw;
            for (std::size_t ky = 0; ky < g.kh; ++ky)
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const double wv = kernel[widx + ky * g.kw + kx];
                    double acc = 0.0;
                    for (std::size_t y = 0; y < g.ho; ++y) {
                        const std::size_t off = (y * g.stride + ky) * g.wp + kx;
                        const double* grow = go + y * g.wo;
                        if (g.stride == 1) {
                            if (gkernel) acc += k.dot(grow, src + off, g.wo);
                            if (gsrc) k.axpy(wv, grow, gsrc + off, g.wo);
                        } else {
                            if (gkernel) {
                                for (std::size_t x = 0; x < g.wo; ++x) row[x] = src[off + x * g.stride];
                                acc += k.dot(grow, row.data(), g.wo);
                            }
                            if (gsrc) {
                                for (std::size_t x = 0; x < g.wo; ++x) gsrc[off + x * g.stride] += wv * grow[x];
                            }
                        }
                    }
                    if (gkernel) gkernel[widx + ky * g.kw + kx] += acc;
                }
        }
    }
}

Tensor conv_common(const char* name, const Tensor& x, const Tensor& kernel, const Tensor& bias, ConvGeometry g) {
    std::vector<double> padded = pad_planes(x.values().data(), g.cin, g.h, g.w, g.pad);
    std::vector<double> out(g.cout * g.ho * g.wo);
    conv_forward(g, padded.data(), kernel.values().data(), bias.defined() ? bias.values().data() : nullptr,
                 out.data());
    const bool track = tracking({&x, &kernel, &bias});
    Tensor y = make_result(name, Shape{g.cout, g.ho, g.wo}, std::move(out), track);
    if (track) {
        active_tape()->record(
            [xn = x.node(), kn = kernel.node(), bn = bias.node(), yn = y.node(), padded = std::move(padded), g] {
                if (yn->grad.empty()) return;
                std::vector<double> gpad;
                if (wants_grad(xn)) gpad.assign(padded.size(), 0.0);
                conv_backward(g, padded.data(), kn->value.data(), yn->grad.data(), gpad.empty() ? nullptr : gpad.data(),
                              wants_grad(kn) ? kn->ensure_grad().data() : nullptr,
                              wants_grad(bn) ? bn->ensure_grad().data() : nullptr);
                if (!gpad.empty()) fold_padding(gpad, xn->ensure_grad().data(), g.cin, g.h, g.w, g.pad);
            });
    }
    return y;
}

std::vector<double> gaussian_taps(double sigma, std::size_t window) {
    const long r = static_cast<long>(window / 2);
    std::vector<double> taps(window);
    double s = 0.0;
    for (long i = -r; i <= r; ++i) {
        taps[static_cast<std::size_t>(i + r)] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
        s += taps[static_cast<std::size_t>(i + r)];
    }
    for (double& t : taps) t /= s;
    return taps;
}

// Separable zero-padded correlation; self-adjoint for symmetric taps.
void blur_planes(const double* in, double* out, std::size_t c, std::size_t h, std::size_t w,
                 const std::vector<double>& taps) {
    const auto& k = simd::kernels();
    const std::size_t r = taps.size() / 2;
    std::vector<double> padrow(w + 2 * r, 0.0);
    std::vector<double> horiz(c * h * w, 0.0);
    for (std::size_t row = 0; row < c * h; ++row) {
        std::copy(in + row * w, in + (row + 1) * w, padrow.begin() + static_cast<std::ptrdiff_t>(r));
        double* dst = horiz.data() + row * w;
        for (std::size_t i = 0; i < taps.size(); ++i) k.axpy(taps[i], padrow.data() + i, dst, w);
    }
    std::fill(out, out + c * h * w, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y) {
            double* dst = out + (ch * h + y) * w;
            for (std::size_t i = 0; i < taps.size(); ++i) {
                const long sy = static_cast<long>(y + i) - static_cast<long>(r);
                if (sy < 0 || sy >= static_cast<long>(h)) continue;
                k.axpy(taps[i], horiz.data() + (ch * h + static_cast<std::size_t>(sy)) * w, dst, w);
            }
        }
}

struct Lerp {
    std::size_t i0, i1;
    double t;
};

std::vector<Lerp> resize_axis(std::size_t in, std::size_t out) {
    std::vector<Lerp> taps(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
        double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        std::size_t i0 = static_cast<std::size_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const std::size_t i1 = i0 + 1 < in ? i0 + 1 : in - 1;
        taps[d] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Conv2dOptions opts) {
    require_rank("conv2d", x, 3, "input");
    require_rank("conv2d", kernel, 4, "kernel");
    ConvGeometry g{};
    g.cin = x.size(0);
    g.h = x.size(1);
    g.w = x.size(2);
    g.cout = kernel.size(0);
    g.kh = kernel.size(2);
    g.kw = kernel.size(3);
    if (kernel.size(1) != g.cin) {
        throw DimensionError("conv2d: kernel axis 1 (C_in=" + std::to_string(kernel.size(1)) +
                             ") != input axis 0 (C=" + std::to_string(g.cin) + ")");
    }
    if (g.kh % 2 == 0 || g.kw % 2 == 0) {
        throw DimensionError("conv2d: kernel axes 2,3 must be odd, got " + shape_str(kernel.shape()));
    }
    if (opts.stride == 0) throw DimensionError("conv2d: stride must be positive");
    if (bias.defined() && bias.shape() != Shape{g.cout}) {
        throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(g.cout) + "]");
    }
    g.pad = {g.kh / 2, g.kh / 2, g.kw / 2, g.kw / 2, opts.padding};
    check_pad("conv2d", g.h, g.w, g.pad);
    g.stride = opts.stride;
    g.hp = g.h + 2 * (g.kh / 2);
    g.wp = g.w + 2 * (g.kw / 2);
    g.ho = (g.hp - g.kh) / g.stride + 1;
    g.wo = (g.wp - g.kw) / g.stride + 1;
    g.depthwise = false;
    return conv_common("conv2d", x, kernel, bias, g);
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Padding padding) {
    require_rank("depthwise_conv2d", x, 3, "input");
    require_rank("depthwise_conv2d", kernel, 3, "kernel");
    ConvGeometry g{};
    g.cin = g.cout = x.size(0);
    g.h = x.size(1);
    g.w = x.size(2);
    g.kh = kernel.size(1);
    g.kw = kernel.size(2);
    if (kernel.size(0) != g.cin) {
        throw DimensionError("depthwise_conv2d: kernel axis 0 (" + std::to_string(kernel.size(0)) +
                             ") != input channel count (" + std::to_string(g.cin) + ")");
    }
    if (g.kh % 2 == 0 || g.kw % 2 == 0) {
        throw DimensionError("depthwise_conv2d: kernel axes 1,2 must be odd, got " + shape_str(kernel.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{g.cout}) {
        throw DimensionError("depthwise_conv2d: bias shape " + shape_str(bias.shape()) + " != [" +
                             std::to_string(g.cout) + "]");
    }
    g.pad = {g.kh / 2, g.kh / 2, g.kw / 2, g.kw / 2, padding};
    check_pad("depthwise_conv2d", g.h, g.w, g.pad);
    g.stride = 1;
    g.hp = g.h + 2 * (g.kh / 2);
    g.wp = g.w + 2 * (g.kw / 2);
    g.ho = g.h;
    g.wo = g.w;
    g.depthwise = true;
    return conv_common("depthwise_conv2d", x, kernel, bias, g);
}

Tensor gaussian_blur(const Tensor& x, double sigma, std::size_t window) {
    require_rank("gaussian_blur", x, 3, "input");
    if (window % 2 == 0 || !(sigma > 0.0)) {
        throw DimensionError("gaussian_blur: window must be odd and sigma positive");
    }
    const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
    auto taps = gaussian_taps(sigma, window);
    std::vector<double> out(x.numel());
    blur_planes(x.values().data(), out.data(), c, h, w, taps);
    const bool track = tracking({&x});
    Tensor y = make_result("gaussian_blur", x.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), taps = std::move(taps), c, h, w] {
            if (yn->grad.empty()) return;
            std::vector<double> gb(yn->grad.size());
            blur_planes(yn->grad.data(), gb.data(), c, h, w, taps);
            simd::kernels().axpy(1.0, gb.data(), xn->ensure_grad().data(), gb.size());
        });
    }
    return y;
}

Tensor bilinear_resize(const Tensor& x, std::size_t height, std::size_t width) {
    require_rank("bilinear_resize", x, 3, "input");
    if (height == 0 || width == 0) throw DimensionError("bilinear_resize: target size must be nonzero");
    const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
    if (h == 0 || w == 0) throw DimensionError("bilinear_resize: empty input " + shape_str(x.shape()));
    auto ys = resize_axis(h, height);
    auto xs = resize_axis(w, width);
    const auto xv = x.values();
    std::vector<double> out(c * height * width);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = xv.data() + ch * h * w;
        for (std::size_t oy = 0; oy < height; ++oy) {
            const Lerp ly = ys[oy];
            for (std::size_t ox = 0; ox < width; ++ox) {
                const Lerp lx = xs[ox];
                const double v00 = src[ly.i0 * w + lx.i0], v01 = src[ly.i0 * w + lx.i1];
                const double v10 = src[ly.i1 * w + lx.i0], v11 = src[ly.i1 * w + lx.i1];
                const double top = v00 + (v01 - v00) * lx.t;
                const double bot = v10 + (v11 - v10) * lx.t;
                out[(ch * height + oy) * width + ox] = top + (bot - top) * ly.t;
            }
        }
    }
    const bool track = tracking({&x});
    Tensor y = make_result("bilinear_resize", Shape{c, height, width}, std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), ys = std::move(ys), xs = std::move(xs), c, h, w, height,
                               width] {
            if (yn->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* dst = gx.data() + ch * h * w;
                for (std::size_t oy = 0; oy < height; ++oy) {
                    const Lerp ly = ys[oy];
                    for (std::size_t ox = 0; ox < width; ++ox) {
                        const Lerp lx = xs[ox];
                        const double g = yn->grad[(ch * height + oy) * width + ox];
                        dst[ly.i0 * w + lx.i0] += g * (1.0 - ly.t) * (1.0 - lx.t);
                        dst[ly.i0 * w + lx.i1] += g * (1.0 - ly.t) * lx.t;
                        dst[ly.i1 * w + lx.i0] += g * ly.t * (1.0 - lx.t);
                        dst[ly.i1 * w + lx.i1] += g * ly.t * lx.t;
                    }
                }
            }
        });
    }
    return y;
}

Tensor pad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right,
             Padding mode) {
    require_rank("pad2d", x, 3, "input");
    const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
    const PadSpec p{top, bottom, left, right, mode};
    check_pad("pad2d", h, w, p);
    const bool track = tracking({&x});
    Tensor y = make_result("pad2d", Shape{c, h + top + bottom, w + left + right},
                           pad_planes(x.values().data(), c, h, w, p), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), p, c, h, w] {
            if (yn->grad.empty()) return;
            fold_padding(yn->grad, xn->ensure_grad().data(), c, h, w, p);
        });
    }
    return y;
}

Tensor crop2d(const Tensor& x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    require_rank("crop2d", x, 3, "input");
    const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
    if (top + height > h || left + width > w) {
        throw DimensionError("crop2d: window exceeds input " + shape_str(x.shape()) + " on axes 1,2");
    }
    std::vector<double> out(c * height * width);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t xx = 0; xx < width; ++xx)
                out[(ch * height + y) * width + xx] = x[(ch * h + top + y) * w + left + xx];
    const bool track = tracking({&x});
    Tensor y = make_result("crop2d", Shape{c, height, width}, std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), c, h, w, top, left, height, width] {
            if (yn->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < height; ++y)
                    for (std::size_t xx = 0; xx < width; ++xx)
                        gx[(ch * h + top + y) * w + left + xx] += yn->grad[(ch * height + y) * width + xx];
        });
    }
    return y;
}

}  // namespace drs::ad
