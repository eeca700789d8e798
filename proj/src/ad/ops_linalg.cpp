#include "derainsplat/ad/ops.hpp"
#include "derainsplat/simd/kernels.hpp"
#include "derainsplat/ad/op_support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drs::ad {

using detail::make_result;
using detail::require_rank;
using detail::tracking;
using detail::wants_grad;

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2, "lhs");
    require_rank("matmul", b, 2, "rhs");
    const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
    if (b.size(0) != k) {
        throw DimensionError("matmul: lhs axis 1 (" + std::to_string(k) + ") != rhs axis 0 (" +
                             std::to_string(b.size(0)) + ")");
    }
    const auto& kt = simd::kernels();
    std::vector<double> out(m * n, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) kt.axpy(av[i * k + p], bv + p * n, out.data() + i * n, n);
    const bool track = tracking({&a, &b});
    Tensor y = make_result("matmul", Shape{m, n}, std::move(out), track);
    if (track) {
        active_tape()->record([an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
            if (yn->grad.empty()) return;
            const auto& kt = simd::kernels();
            const double* g = yn->grad.data();
            if (wants_grad(an)) {
                auto& ga = an->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += kt.dot(g + i * n, bn->value.data() + p * n, n);
            }
            if (wants_grad(bn)) {
                auto& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) kt.axpy(an->value[i * k + p], g + i * n, gb.data() + p * n, n);
            }
        });
    }
    return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank("linear", x, 2, "input");
    require_rank("linear", weight, 2, "weight");
    const std::size_t rows = x.size(0), in = x.size(1), out_dim = weight.size(0);
    if (weight.size(1) != in) {
        throw DimensionError("linear: weight axis 1 (" + std::to_string(weight.size(1)) + ") != input axis 1 (" +
                             std::to_string(in) + ")");
    }
    if (bias.defined() && bias.shape() != Shape{out_dim}) {
        throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(out_dim) + "]");
    }
    const auto& kt = simd::kernels();
    std::vector<double> out(rows * out_dim);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
            out[r * out_dim + o] = kt.dot(x.values().data() + r * in, weight.values().data() + o * in, in) +
                                   (bias.defined() ? bias[o] : 0.0);
        }
    const bool track = tracking({&x, &weight, &bias});
    Tensor y = make_result("linear", Shape{rows, out_dim}, std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), wn = weight.node(), bn = bias.node(), yn = y.node(), rows, in, out_dim] {
            if (yn->grad.empty()) return;
            const auto& kt = simd::kernels();
            const auto& g = yn->grad;
            if (wants_grad(xn)) {
                auto& gx = xn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < out_dim; ++o)
                        kt.axpy(g[r * out_dim + o], wn->value.data() + o * in, gx.data() + r * in, in);
            }
            if (wants_grad(wn)) {
                auto& gw = wn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < out_dim; ++o)
                        kt.axpy(g[r * out_dim + o], xn->value.data() + r * in, gw.data() + o * in, in);
            }
            if (wants_grad(bn)) {
                auto& gb = bn->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
            }
        });
    }
    return y;
}

namespace {

// Shared by the row and channel layouts: `count` vectors of length `dim`,
// element j of vector v at offset base(v) + j * stride.
struct NormLayout {
    std::size_t count, dim, stride;
    std::size_t base(std::size_t v) const { return stride == 1 ? v * dim : v; }
};

Tensor layer_norm_impl(const char* name, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                       NormLayout lay) {
    if (gamma.shape() != Shape{lay.dim} || beta.shape() != Shape{lay.dim}) {
        throw DimensionError(std::string(name) + ": gamma/beta must be [" + std::to_string(lay.dim) + "], got " +
                             shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    }
    const auto xv = x.values();
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(lay.count);
    const double d = static_cast<double>(lay.dim);
    for (std::size_t v = 0; v < lay.count; ++v) {
        const std::size_t b0 = lay.base(v);
        double mu = 0.0;
        for (std::size_t j = 0; j < lay.dim; ++j) mu += xv[b0 + j * lay.stride];
        mu /= d;
        double var = 0.0;
        for (std::size_t j = 0; j < lay.dim; ++j) {
            const double c = xv[b0 + j * lay.stride] - mu;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[v] = is;
        for (std::size_t j = 0; j < lay.dim; ++j) {
            const std::size_t idx = b0 + j * lay.stride;
            xhat[idx] = (xv[idx] - mu) * is;
            out[idx] = gamma[j] * xhat[idx] + beta[j];
        }
    }
    const bool track = tracking({&x, &gamma, &beta});
    Tensor y = make_result(name, x.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node(),
                               xhat = std::move(xhat), inv_std = std::move(inv_std), lay] {
            if (yn->grad.empty()) return;
            const auto& g = yn->grad;
            const double d = static_cast<double>(lay.dim);
            std::vector<double>* gx = wants_grad(xn) ? &xn->ensure_grad() : nullptr;
            std::vector<double>* gg = wants_grad(gn) ? &gn->ensure_grad() : nullptr;
            std::vector<double>* gb = wants_grad(bn) ? &bn->ensure_grad() : nullptr;
            for (std::size_t v = 0; v < lay.count; ++v) {
                const std::size_t b0 = lay.base(v);
                double mean_gh = 0.0, mean_ghx = 0.0;
                for (std::size_t j = 0; j < lay.dim; ++j) {
                    const std::size_t idx = b0 + j * lay.stride;
                    const double gh = g[idx] * gn->value[j];
                    mean_gh += gh;
                    mean_ghx += gh * xhat[idx];
                    if (gg) (*gg)[j] += g[idx] * xhat[idx];
                    if (gb) (*gb)[j] += g[idx];
                }
                if (!gx) continue;
                mean_gh /= d;
                mean_ghx /= d;
                for (std::size_t j = 0; j < lay.dim; ++j) {
                    const std::size_t idx = b0 + j * lay.stride;
                    const double gh = g[idx] * gn->value[j];
                    (*gx)[idx] += inv_std[v] * (gh - mean_gh - xhat[idx] * mean_ghx);
                }
            }
        });
    }
    return y;
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank("layer_norm", x, 2, "input");
    return layer_norm_impl("layer_norm", x, gamma, beta, eps, NormLayout{x.size(0), x.size(1), 1});
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank("layer_norm_channels", x, 3, "input");
    const std::size_t plane = x.size(1) * x.size(2);
    return layer_norm_impl("layer_norm_channels", x, gamma, beta, eps, NormLayout{plane, x.size(0), plane});
}

Tensor topk_softmax_rows(const Tensor& logits, std::size_t k) {
    require_rank("topk_softmax_rows", logits, 2, "logits");
    const std::size_t rows = logits.size(0), cols = logits.size(1);
    if (k == 0 || k > cols) {
        throw DimensionError("topk_softmax_rows: k=" + std::to_string(k) + " outside [1," + std::to_string(cols) + "]");
    }
    const auto lv = logits.values();
    std::vector<double> out(rows * cols, 0.0);
    // kept column indices per row, ascending
    std::vector<std::size_t> kept(rows * k);
    std::vector<std::size_t> order(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = lv.data() + r * cols;
        std::size_t* keep = kept.data() + r * k;
        if (k == cols) {
            std::iota(keep, keep + k, std::size_t{0});
        } else {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                             [row](std::size_t i, std::size_t j) { return row[i] > row[j] || (row[i] == row[j] && i < j); });
            std::copy(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), keep);
            std::sort(keep, keep + k);
        }
        double mx = row[keep[0]];
        for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, row[keep[i]]);
        double s = 0.0;
        double* orow = out.data() + r * cols;
        for (std::size_t i = 0; i < k; ++i) {
            orow[keep[i]] = std::exp(row[keep[i]] - mx);
            s += orow[keep[i]];
        }
        for (std::size_t i = 0; i < k; ++i) orow[keep[i]] /= s;
    }
    const bool track = tracking({&logits});
    Tensor y = make_result("topk_softmax_rows", logits.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([ln = logits.node(), yn = y.node(), kept = std::move(kept), rows, cols, k] {
            if (yn->grad.empty()) return;
            auto& gl = ln->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t* keep = kept.data() + r * k;
                const double* p = yn->value.data() + r * cols;
                const double* g = yn->grad.data() + r * cols;
                double dotpg = 0.0;
                for (std::size_t i = 0; i < k; ++i) dotpg += p[keep[i]] * g[keep[i]];
                for (std::size_t i = 0; i < k; ++i) {
                    const std::size_t c = keep[i];
                    gl[r * cols + c] += p[c] * (g[c] - dotpg);
                }
            }
        });
    }
    return y;
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank("softmax_rows", logits, 2, "logits");
    return topk_softmax_rows(logits, logits.size(1));
}

}  // namespace drs::ad
