#include "derainsplat/ad/ops.hpp"
#include "derainsplat/simd/kernels.hpp"
#include "derainsplat/ad/op_support.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace drs::ad {

using detail::make_result;
using detail::tracking;
using detail::wants_grad;

namespace {

// Direct DFT on every axis length. Twiddles are indexed by (u*n mod N) so the
// angle argument stays in [0, 2 pi) and tables are exact to rounding.
struct Twiddles {
    std::vector<double> cos_tab;  // [u * n + k]
    std::vector<double> sin_tab;
};

const Twiddles& twiddles(std::size_t n) {
    thread_local std::map<std::size_t, Twiddles> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Twiddles t;
    t.cos_tab.resize(n * n);
    t.sin_tab.resize(n * n);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t k = 0; k < n; ++k) {
            const double ang = 2.0 * std::numbers::pi * static_cast<double>((u * k) % n) / static_cast<double>(n);
            t.cos_tab[u * n + k] = std::cos(ang);
            t.sin_tab[u * n + k] = std::sin(ang);
        }
    return cache.emplace(n, std::move(t)).first->second;
}

// Transforms `rows` contiguous complex rows of length n in place-by-copy.
// forward: exp(-i phi), inverse: exp(+i phi); never normalized here.
void dft_rows(const double* re, const double* im, double* ore, double* oim, std::size_t rows, std::size_t n,
              bool inverse) {
    const auto& k = simd::kernels();
    const Twiddles& t = twiddles(n);
    const double s = inverse ? 1.0 : -1.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = re + r * n;
        const double* xi = im + r * n;
        for (std::size_t u = 0; u < n; ++u) {
            const double* c = t.cos_tab.data() + u * n;
            const double* sn = t.sin_tab.data() + u * n;
            const double rc = k.dot(xr, c, n), rs = k.dot(xr, sn, n);
            const double ic = k.dot(xi, c, n), is = k.dot(xi, sn, n);
            // (xr + i xi)(c + i s sn)
            ore[r * n + u] = rc - s * is;
            oim[r * n + u] = ic + s * rs;
        }
    }
}

void transpose_planes(const double* in, double* out, std::size_t c, std::size_t h, std::size_t w) {
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out[(ch * w + x) * h + y] = in[(ch * h + y) * w + x];
}

// 2D transform of c planes [h,w]; scale applied to the result.
void dft2(const double* re, const double* im, double* ore, double* oim, std::size_t c, std::size_t h, std::size_t w,
          bool inverse, double scale_by) {
    const std::size_t n = c * h * w;
    std::vector<double> ar(n), ai(n), tr(n), ti(n);
    dft_rows(re, im, ar.data(), ai.data(), c * h, w, inverse);
    transpose_planes(ar.data(), tr.data(), c, h, w);
    transpose_planes(ai.data(), ti.data(), c, h, w);
    dft_rows(tr.data(), ti.data(), ar.data(), ai.data(), c * w, h, inverse);
    transpose_planes(ar.data(), ore, c, w, h);
    transpose_planes(ai.data(), oim, c, w, h);
    if (scale_by != 1.0) {
        for (std::size_t i = 0; i < n; ++i) {
            ore[i] *= scale_by;
            oim[i] *= scale_by;
        }
    }
}

ComplexTensor transform(const char* name, const Tensor& re, const Tensor& im, bool inverse) {
    detail::require_rank(name, re, 3, "input");
    if (re.numel() == 0) throw DimensionError(std::string(name) + ": empty tensor");
    if (im.defined() && im.shape() != re.shape()) {
        throw DimensionError(std::string(name) + ": real/imaginary plane shapes differ");
    }
    const std::size_t c = re.size(0), h = re.size(1), w = re.size(2), n = re.numel();
    const double norm = inverse ? 1.0 / static_cast<double>(h * w) : 1.0;
    std::vector<double> zeros;
    const double* imv = im.defined() ? im.values().data() : (zeros.assign(n, 0.0), zeros.data());
    std::vector<double> ore(n), oim(n);
    dft2(re.values().data(), imv, ore.data(), oim.data(), c, h, w, inverse, norm);
    const bool track = tracking({&re, &im});
    ComplexTensor out{make_result(name, re.shape(), std::move(ore), track),
                      make_result(name, re.shape(), std::move(oim), track)};
    if (track) {
        active_tape()->record(
            [rn = re.node(), in = im.node(), yr = out.re.node(), yi = out.im.node(), c, h, w, n, inverse, norm] {
                if (yr->grad.empty() && yi->grad.empty()) return;
                const std::vector<double> zero(n, 0.0);
                const double* gr = yr->grad.empty() ? zero.data() : yr->grad.data();
                const double* gi = yi->grad.empty() ? zero.data() : yi->grad.data();
                std::vector<double> bre(n), bim(n);
                // adjoint: opposite exponent sign, same scale
                dft2(gr, gi, bre.data(), bim.data(), c, h, w, !inverse, norm);
                const auto& k = simd::kernels();
                if (wants_grad(rn)) k.axpy(1.0, bre.data(), rn->ensure_grad().data(), n);
                if (wants_grad(in)) k.axpy(1.0, bim.data(), in->ensure_grad().data(), n);
            });
    }
    return out;
}

}  // namespace

ComplexTensor fft2(const Tensor& x) { return transform("fft2", x, Tensor{}, false); }

ComplexTensor fft2(const ComplexTensor& x) { return transform("fft2", x.re, x.im, false); }

ComplexTensor ifft2(const ComplexTensor& x) { return transform("ifft2", x.re, x.im, true); }

Tensor complex_abs(const ComplexTensor& z) {
    detail::require_same_shape("complex_abs", z.re, z.im);
    const std::size_t n = z.re.numel();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(z.re[i] * z.re[i] + z.im[i] * z.im[i]);
    const bool track = tracking({&z.re, &z.im});
    Tensor y = make_result("complex_abs", z.re.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([rn = z.re.node(), in = z.im.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            const std::size_t n = yn->value.size();
            std::vector<double>* gr = wants_grad(rn) ? &rn->ensure_grad() : nullptr;
            std::vector<double>* gi = wants_grad(in) ? &in->ensure_grad() : nullptr;
            for (std::size_t i = 0; i < n; ++i) {
                const double m = yn->value[i];
                if (m == 0.0) continue;
                const double g = yn->grad[i] / m;
                if (gr) (*gr)[i] += g * rn->value[i];
                if (gi) (*gi)[i] += g * in->value[i];
            }
        });
    }
    return y;
}

}  // namespace drs::ad
