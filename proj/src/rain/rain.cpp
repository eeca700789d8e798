#include "derainsplat/rain/rain.hpp"

#include "derainsplat/ad/ops.hpp"
#include "derainsplat/common/error.hpp"
#include "derainsplat/common/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace drs::rain {

namespace {

constexpr double kMaxAspect = 1.3;
constexpr double kLensInversion = 1.6;

std::int64_t sample_int(Rng& rng, const Range& r, const char* name) {
    const auto lo = static_cast<std::int64_t>(std::ceil(r.lo));
    const auto hi = static_cast<std::int64_t>(std::floor(r.hi));
    if (lo > hi) throw ValidationError(std::string("empty sub-range for ") + name);
    return rng.integer(lo, hi);
}

void check_range(const Range& r, double min_lo, const char* name) {
    if (!(r.lo <= r.hi)) throw ValidationError(std::string("empty sub-range for ") + name);
    if (r.lo < min_lo) throw ValidationError(std::string("sub-range for ") + name + " must be >= " + std::to_string(min_lo));
}

void check_image(const Tensor& img, const char* who) {
    if (!img.defined() || img.rank() != 3 || img.numel() == 0)
        throw DimensionError(std::string(who) + ": expected a non-empty [C,H,W] image");
}

double sample_bilinear(const Tensor& img, std::size_t c, double x, double y) {
    const std::size_t h = img.size(1), w = img.size(2);
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const auto x0 = static_cast<std::size_t>(x), y0 = static_cast<std::size_t>(y);
    const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    const std::size_t base = c * h * w;
    const double top = img[base + y0 * w + x0] * (1 - fx) + img[base + y0 * w + x1] * fx;
    const double bot = img[base + y1 * w + x0] * (1 - fx) + img[base + y1 * w + x1] * fx;
    return top * (1 - fy) + bot * fy;
}

}  // namespace

RainMode parse_rain_mode(const std::string& s) {
    if (s == "streak") return RainMode::streak;
    if (s == "drop") return RainMode::drop;
    if (s == "both") return RainMode::both;
    throw ValidationError("unknown rain mode '" + s + "' (expected streak, drop or both)");
}

std::string rain_mode_name(RainMode m) {
    switch (m) {
        case RainMode::streak: return "streak";
        case RainMode::drop: return "drop";
        case RainMode::both: return "both";
    }
    return "?";
}

StreakParams sample_streak_params(const SceneRainConfig& config, std::uint64_t view_index) {
    const auto& r = config.streaks;
    check_range(r.n, 0.0, "n");
    check_range(r.l, 1.0, "l");
    check_range(r.theta, -1e9, "theta");
    check_range(r.w, 1.0, "w");
    StreakParams p;
    p.seed = config.base_seed ^ view_index;
    Rng rng(mix_seed(p.seed));
    p.n = static_cast<int>(sample_int(rng, r.n, "n"));
    p.l = static_cast<int>(sample_int(rng, r.l, "l"));
    p.theta = rng.uniform(r.theta.lo, r.theta.hi);
    p.w = static_cast<int>(sample_int(rng, r.w, "w"));
    return p;
}

Tensor gen_noise_layer(const StreakParams& params, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw DimensionError("gen_noise_layer: H and W must be positive");
    const std::size_t total = height * width;
    if (params.n < 0 || static_cast<std::size_t>(params.n) > total)
        throw ValidationError("gen_noise_layer: n=" + std::to_string(params.n) + " exceeds H*W=" +
                              std::to_string(total));
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(mix_seed(params.seed ^ 0x6e6f697365ULL));
    Tensor out({1, height, width}, 0.0);
    auto v = out.mutable_values();
    // partial Fisher-Yates: the first n slots are a uniform n-subset
    for (std::size_t i = 0; i < static_cast<std::size_t>(params.n); ++i) {
        const std::size_t j = i + rng.below(total - i);
        std::swap(idx[i], idx[j]);
        v[idx[i]] = 1.0;
    }
    return out;
}

Tensor build_motion_kernel(int l, double theta, int w, double blur_sigma_factor) {
    if (l < 1 || w < 1) throw ValidationError("build_motion_kernel: l and w must be >= 1");
    const std::size_t p = static_cast<std::size_t>(l % 2 == 1 ? l : l + 1);
    const double c = static_cast<double>(p - 1) / 2.0;
    double t = std::fmod(theta, 180.0);
    if (t < 0) t += 180.0;
    const double rad = t * std::numbers::pi / 180.0;
    const double dx = std::cos(rad), dy = -std::sin(rad);  // image y points down

    Tensor line({1, p, p}, 0.0);
    auto lv = line.mutable_values();
    for (int i = 0; i < l; ++i) {
        const double s = static_cast<double>(i) - static_cast<double>(l - 1) / 2.0;
        const auto x = static_cast<long>(std::lround(c + s * dx));
        const auto y = static_cast<long>(std::lround(c + s * dy));
        if (x < 0 || y < 0 || x >= static_cast<long>(p) || y >= static_cast<long>(p)) continue;
        lv[static_cast<std::size_t>(y) * p + static_cast<std::size_t>(x)] = 1.0;
    }
    Tensor k = line;
    if (w > 1) {
        const auto win = static_cast<std::size_t>(w % 2 == 1 ? w : w + 1);
        k = ad::gaussian_blur(line, blur_sigma_factor * w, win);
    }
    const double total = ad::sum(k).item();
    std::vector<double> vals(k.values().begin(), k.values().end());
    for (double& x : vals) x /= total;
    return Tensor({p, p}, std::move(vals));
}

StreakResult synth_streaks(const Tensor& background, const StreakParams& params, double gain,
                           double blur_sigma_factor) {
    check_image(background, "synth_streaks");
    ad::NoGradScope no_grad;
    const std::size_t c = background.size(0), h = background.size(1), w = background.size(2);
    Tensor noise = gen_noise_layer(params, h, w);
    Tensor k = build_motion_kernel(params.l, params.theta, params.w, blur_sigma_factor);
    const std::size_t p = k.size(0);
    Tensor layer = ad::clamp(ad::scale(ad::conv2d(noise, ad::reshape(k, {1, 1, p, p})), gain), 0.0, 1.0);
    if (params.n == 0) layer = Tensor({1, h, w}, 0.0);
    Tensor rainy = ad::clamp(ad::add(background, ad::expand_channels(layer, c)), 0.0, 1.0);
    if (params.n == 0) rainy = background.detach();
    return {rainy, layer};
}

DropField gen_drop_field(std::uint64_t seed, const Tensor& background, int drop_count, Range radius_range,
                         double blur_sigma) {
    check_image(background, "gen_drop_field");
    if (drop_count < 0) throw ValidationError("gen_drop_field: drop_count must be >= 0");
    if (!(radius_range.lo > 0 && radius_range.lo <= radius_range.hi))
        throw ValidationError("gen_drop_field: radius range must be positive and non-empty");
    const std::size_t c = background.size(0), h = background.size(1), w = background.size(2);
    const double extent = radius_range.hi * std::sqrt(kMaxAspect);
    if (drop_count > 0 && 2.0 * extent + 1.0 > static_cast<double>(std::min(h, w)))
        throw ValidationError("gen_drop_field: drop larger than image");

    DropField field;
    Rng rng(mix_seed(seed ^ 0x64726f70ULL));
    for (int i = 0; i < drop_count; ++i) {
        Drop d;
        const double r = rng.uniform(radius_range.lo, radius_range.hi);
        const double aspect = rng.uniform(1.0, kMaxAspect);
        d.semi_major = r * std::sqrt(aspect);
        d.semi_minor = r / std::sqrt(aspect);
        d.angle = rng.uniform(0.0, std::numbers::pi);
        d.cx = rng.uniform(extent, static_cast<double>(w) - extent);
        d.cy = rng.uniform(extent, static_cast<double>(h) - extent);
        field.drops.push_back(d);
    }

    // owner[i] = index of the last drop covering pixel i, or -1
    std::vector<int> owner(h * w, -1);
    for (std::size_t k = 0; k < field.drops.size(); ++k) {
        const Drop& d = field.drops[k];
        const double ca = std::cos(d.angle), sa = std::sin(d.angle);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double px = static_cast<double>(x) + 0.5 - d.cx, py = static_cast<double>(y) + 0.5 - d.cy;
                const double u = (px * ca + py * sa) / d.semi_major, v = (-px * sa + py * ca) / d.semi_minor;
                if (u * u + v * v <= 1.0) owner[y * w + x] = static_cast<int>(k);
            }
    }

    field.mask = Tensor({1, h, w}, 0.0);
    auto mv = field.mask.mutable_values();
    Tensor raw = background.detach();
    auto rv = raw.mutable_values();
    for (std::size_t i = 0; i < h * w; ++i) {
        if (owner[i] < 0) continue;
        mv[i] = 1.0;
        const Drop& d = field.drops[static_cast<std::size_t>(owner[i])];
        const double px = static_cast<double>(i % w), py = static_cast<double>(i / w);
        const double sx = d.cx - 0.5 - kLensInversion * (px + 0.5 - d.cx);
        const double sy = d.cy - 0.5 - kLensInversion * (py + 0.5 - d.cy);
        for (std::size_t ch = 0; ch < c; ++ch) rv[ch * h * w + i] = sample_bilinear(background, ch, sx, sy);
    }
    Tensor blurred = raw;
    if (blur_sigma > 0) {
        ad::NoGradScope no_grad;
        const auto win = 2 * static_cast<std::size_t>(std::ceil(3.0 * blur_sigma)) + 1;
        blurred = ad::gaussian_blur(raw, blur_sigma, win);
    }
    field.appearance = Tensor({c, h, w}, 0.0);
    auto av = field.appearance.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i)
            if (mv[i] != 0.0) av[ch * h * w + i] = std::clamp(blurred[ch * h * w + i], 0.0, 1.0);
    return field;
}

Tensor composite_drops(const Tensor& background, const DropField& field) {
    check_image(background, "composite_drops");
    const std::size_t c = background.size(0), h = background.size(1), w = background.size(2);
    if (field.mask.shape() != ad::Shape{1, h, w} || field.appearance.shape() != background.shape())
        throw DimensionError("composite_drops: field shape " + ad::shape_str(field.appearance.shape()) +
                             " does not match background " + ad::shape_str(background.shape()));
    std::vector<double> out(c * h * w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) {
            const std::size_t j = ch * h * w + i;
            out[j] = (1.0 - field.mask[i]) * background[j] + field.appearance[j];
        }
    return Tensor(background.shape(), std::move(out));
}

RainyView apply_scene_rain(const SceneRainConfig& config, const Tensor& background, std::uint64_t view_index) {
    check_image(background, "apply_scene_rain");
    const std::size_t h = background.size(1), w = background.size(2);
    RainyView view;
    view.image = background.detach();
    view.streaks = Tensor({1, h, w}, 0.0);
    view.drop_mask = Tensor({1, h, w}, 0.0);
    if (config.mode != RainMode::drop) {
        view.params = sample_streak_params(config, view_index);
        auto s = synth_streaks(view.image, view.params, config.gain, config.blur_sigma_factor);
        view.image = s.rainy;
        view.streaks = s.layer;
        view.has_streaks = true;
    }
    if (config.mode != RainMode::streak) {
        auto field = gen_drop_field(config.base_seed, view.image, config.drop_count, config.drop_radius,
                                    config.drop_blur_sigma);
        view.image = composite_drops(view.image, field);
        view.drop_mask = field.mask;
        view.has_drops = true;
    }
    return view;
}

Tensor rain_pixel_mask(const RainyView& view, double streak_threshold) {
    Tensor out(view.streaks.shape(), 0.0);
    auto o = out.mutable_values();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = (view.streaks[i] > streak_threshold || view.drop_mask[i] > 0.5) ? 1.0 : 0.0;
    return out;
}

}  // namespace drs::rain
