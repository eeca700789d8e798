#include "derainsplat/loss/loss.hpp"

#include "derainsplat/ad/ops.hpp"
#include "derainsplat/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drs::loss {

using namespace drs::ad;

namespace {

constexpr double kMaskTolerance = 1e-12;

void check_pair(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rank() != 3) throw DimensionError(std::string(op) + ": images must be [C,H,W], got " + shape_str(a.shape()));
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_mask(const char* op, const Tensor& mask, const Tensor& image) {
    if (mask.shape() != Shape{1, image.size(1), image.size(2)})
        throw DimensionError(std::string(op) + ": mask must be [1," + std::to_string(image.size(1)) + "," +
                             std::to_string(image.size(2)) + "], got " + shape_str(mask.shape()));
    for (double v : mask.values())
        if (!(v >= -kMaskTolerance && v <= 1.0 + kMaskTolerance))
            throw ValidationError(std::string(op) + ": mask value " + std::to_string(v) + " outside [0,1]");
}

struct Terms {
    Tensor l1, dssim;
};

Terms masked_terms(const Tensor& rendered, const Tensor& target, const Tensor& mask, const LossConfig& cfg) {
    const Tensor keep = expand_channels(rsub_scalar(1.0, mask), rendered.size(0));
    Terms t;
    t.l1 = mean(mul(keep, abs(sub(rendered, target))));
    t.dssim = mean(mul(keep, rsub_scalar(1.0, ssim_map(rendered, target, cfg))));
    return t;
}

}  // namespace

void LossConfig::validate() const {
    if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) throw ValidationError("loss: lambda_ssim must lie in [0,1]");
    if (ssim_window % 2 == 0 || ssim_window == 0) throw ValidationError("loss: ssim_window must be odd");
    if (!(ssim_sigma > 0.0)) throw ValidationError("loss: ssim_sigma must be positive");
    if (!(c1 > 0.0 && c2 > 0.0)) throw ValidationError("loss: SSIM constants must be positive");
    if (!(lambda_reg_per_pixel >= 0.0) || !std::isfinite(lambda_reg_per_pixel))
        throw ValidationError("loss: lambda_reg_per_pixel must be non-negative");
}

double LossConfig::resolved_lambda_reg(std::size_t height, std::size_t width) const {
    return lambda_reg < 0.0 ? lambda_reg_per_pixel / static_cast<double>(height * width) : lambda_reg;
}

Tensor ssim_map(const Tensor& a, const Tensor& b, const LossConfig& cfg) {
    check_pair("ssim", a, b);
    cfg.validate();
    auto blur = [&cfg](const Tensor& x) { return gaussian_blur(x, cfg.ssim_sigma, cfg.ssim_window); };
    const Tensor mu_a = blur(a), mu_b = blur(b);
    const Tensor mu_aa = square(mu_a), mu_bb = square(mu_b), mu_ab = mul(mu_a, mu_b);
    const Tensor s_aa = sub(blur(square(a)), mu_aa);
    const Tensor s_bb = sub(blur(square(b)), mu_bb);
    const Tensor s_ab = sub(blur(mul(a, b)), mu_ab);
    const Tensor num = mul(add_scalar(scale(mu_ab, 2.0), cfg.c1), add_scalar(scale(s_ab, 2.0), cfg.c2));
    const Tensor den = mul(add_scalar(add(mu_aa, mu_bb), cfg.c1), add_scalar(add(s_aa, s_bb), cfg.c2));
    return div(num, den);
}

Tensor masked_photometric_loss(const Tensor& rendered, const Tensor& target, const Tensor& mask,
                               const LossConfig& cfg) {
    check_pair("masked_photometric_loss", rendered, target);
    check_mask("masked_photometric_loss", mask, rendered);
    cfg.validate();
    const Terms t = masked_terms(rendered, target, mask, cfg);
    return add(scale(t.l1, 1.0 - cfg.lambda_ssim), scale(t.dssim, cfg.lambda_ssim));
}

Tensor mask_reg(const Tensor& mask) { return sum(square(mask)); }

LossBreakdown total_loss(const Tensor& rendered, const Tensor& target, const Tensor& mask, const LossConfig& cfg) {
    check_pair("total_loss", rendered, target);
    check_mask("total_loss", mask, rendered);
    cfg.validate();
    const Terms t = masked_terms(rendered, target, mask, cfg);
    const Tensor l1_term = scale(t.l1, 1.0 - cfg.lambda_ssim);
    const Tensor ssim_term = scale(t.dssim, cfg.lambda_ssim);
    const Tensor l_c = add(l1_term, ssim_term);
    const Tensor reg = mask_reg(mask);
    LossBreakdown out;
    out.lambda_reg = cfg.resolved_lambda_reg(rendered.size(1), rendered.size(2));
    out.total = add(l_c, scale(reg, out.lambda_reg));
    out.l1_term = l1_term.item();
    out.ssim_term = ssim_term.item();
    out.l_c = l_c.item();
    out.l_reg = reg.item();
    out.total_value = out.total.item();
    return out;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    check_pair("psnr", a, b);
    if (!(peak > 0.0)) throw ValidationError("psnr: peak must be positive");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    mse /= static_cast<double>(a.numel());
    if (mse < 1e-12) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg) {
    NoGradScope no_grad;
    return mean(ssim_map(a, b, cfg)).item();
}

}  // namespace drs::loss
