#include "derainsplat/ad/ops.hpp"
#include "derainsplat/simd/kernels.hpp"
#include "derainsplat/ad/op_support.hpp"

#include <cmath>
#include <numbers>

namespace drs::ad {

using detail::make_result;
using detail::NodePtr;
using detail::require_same_shape;
using detail::tracking;
using detail::wants_grad;

namespace {

// y = f(x) with dy/dx = df(x, y), applied elementwise.
template <typename F, typename DF>
Tensor unary(const char* name, const Tensor& x, F f, DF df) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const bool track = tracking({&x});
    Tensor y = make_result(name, x.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), df] {
            if (yn->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i] * df(xn->value[i], yn->value[i]);
        });
    }
    return y;
}

Tensor scalar_result(const char* name, double v, bool track) { return make_result(name, Shape{}, {v}, track); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.values().begin(), a.values().end());
    simd::kernels().axpy(1.0, b.values().data(), out.data(), out.size());
    const bool track = tracking({&a, &b});
    Tensor y = make_result("add", a.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            const auto& k = simd::kernels();
            if (wants_grad(an)) k.axpy(1.0, yn->grad.data(), an->ensure_grad().data(), yn->grad.size());
            if (wants_grad(bn)) k.axpy(1.0, yn->grad.data(), bn->ensure_grad().data(), yn->grad.size());
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.values().begin(), a.values().end());
    simd::kernels().axpy(-1.0, b.values().data(), out.data(), out.size());
    const bool track = tracking({&a, &b});
    Tensor y = make_result("sub", a.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            const auto& k = simd::kernels();
            if (wants_grad(an)) k.axpy(1.0, yn->grad.data(), an->ensure_grad().data(), yn->grad.size());
            if (wants_grad(bn)) k.axpy(-1.0, yn->grad.data(), bn->ensure_grad().data(), yn->grad.size());
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    simd::kernels().mul(a.values().data(), b.values().data(), out.data(), out.size());
    const bool track = tracking({&a, &b});
    Tensor y = make_result("mul", a.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            const auto& g = yn->grad;
            if (wants_grad(an)) {
                auto& ga = an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->value[i];
            }
            if (wants_grad(bn)) {
                auto& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->value[i];
            }
        });
    }
    return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
    const bool track = tracking({&a, &b});
    Tensor y = make_result("div", a.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            const auto& g = yn->grad;
            if (wants_grad(an)) {
                auto& ga = an->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bn->value[i];
            }
            if (wants_grad(bn)) {
                auto& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * yn->value[i] / bn->value[i];
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& x, double s) {
    std::vector<double> out(x.numel());
    simd::kernels().scale(s, x.values().data(), out.data(), out.size());
    const bool track = tracking({&x});
    Tensor y = make_result("scale", x.shape(), std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), s] {
            if (yn->grad.empty()) return;
            simd::kernels().axpy(s, yn->grad.data(), xn->ensure_grad().data(), yn->grad.size());
        });
    }
    return y;
}

Tensor add_scalar(const Tensor& x, double s) {
    return unary("add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor rsub_scalar(double s, const Tensor& x) {
    return unary("rsub_scalar", x, [s](double v) { return s - v; }, [](double, double) { return -1.0; });
}

Tensor square(const Tensor& x) {
    return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
    return unary(
        "abs", x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
    return unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        "gelu", x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    return unary(
        "clamp", x, [=](double v) { return v < lo ? lo : (v > hi ? hi : v); },
        [=](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
    const double s = simd::kernels().sum(x.values().data(), x.numel());
    const bool track = tracking({&x});
    Tensor y = scalar_result("sum", s, track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            const double g = yn->grad[0];
            for (double& v : xn->ensure_grad()) v += g;
        });
    }
    return y;
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw DimensionError("mean: empty tensor");
    const double n = static_cast<double>(x.numel());
    const double s = simd::kernels().sum(x.values().data(), x.numel()) / n;
    const bool track = tracking({&x});
    Tensor y = scalar_result("mean", s, track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), n] {
            if (yn->grad.empty()) return;
            const double g = yn->grad[0] / n;
            for (double& v : xn->ensure_grad()) v += g;
        });
    }
    return y;
}

Tensor l1(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

Tensor l2(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    const bool track = tracking({&x});
    Tensor y = make_result("reshape", std::move(shape), std::vector<double>(x.values().begin(), x.values().end()),
                           track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            simd::kernels().axpy(1.0, yn->grad.data(), xn->ensure_grad().data(), yn->grad.size());
        });
    }
    return y;
}

Tensor transpose(const Tensor& x) {
    detail::require_rank("transpose", x, 2, "input");
    const std::size_t m = x.size(0), n = x.size(1);
    const auto xv = x.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
    const bool track = tracking({&x});
    Tensor y = make_result("transpose", Shape{n, m}, std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), m, n] {
            if (yn->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += yn->grad[j * m + i];
        });
    }
    return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    detail::require_rank("concat_channels", a, 3, "first input");
    detail::require_rank("concat_channels", b, 3, "second input");
    if (a.size(1) != b.size(1) || a.size(2) != b.size(2)) {
        throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()) + " on axes 1,2");
    }
    std::vector<double> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    const bool track = tracking({&a, &b});
    Tensor y = make_result("concat_channels", Shape{a.size(0) + b.size(0), a.size(1), a.size(2)}, std::move(out),
                           track);
    if (track) {
        active_tape()->record([an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty()) return;
            const auto& k = simd::kernels();
            const std::size_t na = an->value.size();
            if (wants_grad(an)) k.axpy(1.0, yn->grad.data(), an->ensure_grad().data(), na);
            if (wants_grad(bn)) k.axpy(1.0, yn->grad.data() + na, bn->ensure_grad().data(), bn->value.size());
        });
    }
    return y;
}

Tensor expand_channels(const Tensor& x, std::size_t channels) {
    detail::require_rank("expand_channels", x, 3, "input");
    if (x.size(0) != 1) throw DimensionError("expand_channels: axis 0 must be 1, got " + shape_str(x.shape()));
    const std::size_t plane = x.size(1) * x.size(2);
    std::vector<double> out(channels * plane);
    for (std::size_t c = 0; c < channels; ++c) std::copy(x.values().begin(), x.values().end(), out.begin() + c * plane);
    const bool track = tracking({&x});
    Tensor y = make_result("expand_channels", Shape{channels, x.size(1), x.size(2)}, std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), channels, plane] {
            if (yn->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t c = 0; c < channels; ++c)
                simd::kernels().axpy(1.0, yn->grad.data() + c * plane, gx.data(), plane);
        });
    }
    return y;
}

Tensor expand_spatial(const Tensor& x, std::size_t height, std::size_t width) {
    detail::require_rank("expand_spatial", x, 3, "input");
    if (x.size(1) != 1 || x.size(2) != 1) {
        throw DimensionError("expand_spatial: axes 1,2 must be 1, got " + shape_str(x.shape()));
    }
    const std::size_t c = x.size(0), plane = height * width;
    std::vector<double> out(c * plane);
    for (std::size_t i = 0; i < c; ++i) std::fill(out.begin() + i * plane, out.begin() + (i + 1) * plane, x[i]);
    const bool track = tracking({&x});
    Tensor y = make_result("expand_spatial", Shape{c, height, width}, std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), c, plane] {
            if (yn->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < c; ++i) gx[i] += simd::kernels().sum(yn->grad.data() + i * plane, plane);
        });
    }
    return y;
}

Tensor global_avg_pool(const Tensor& x) {
    detail::require_rank("global_avg_pool", x, 3, "input");
    const std::size_t c = x.size(0), plane = x.size(1) * x.size(2);
    if (plane == 0) throw DimensionError("global_avg_pool: empty spatial extent");
    std::vector<double> out(c);
    for (std::size_t i = 0; i < c; ++i)
        out[i] = simd::kernels().sum(x.values().data() + i * plane, plane) / static_cast<double>(plane);
    const bool track = tracking({&x});
    Tensor y = make_result("global_avg_pool", Shape{c, 1, 1}, std::move(out), track);
    if (track) {
        active_tape()->record([xn = x.node(), yn = y.node(), c, plane] {
            if (yn->grad.empty()) return;
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < c; ++i) {
                const double g = yn->grad[i] / static_cast<double>(plane);
                for (std::size_t j = 0; j < plane; ++j) gx[i * plane + j] += g;
            }
        });
    }
    return y;
}

}  // namespace drs::ad
