#include "derainsplat/freqmask/mask.hpp"

#include "derainsplat/ad/ops.hpp"
#include "derainsplat/common/error.hpp"
#include "derainsplat/common/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drs::freqmask {

using namespace drs::ad;

namespace {

constexpr double kImagTolerance = 1e-9;

double normalized_frequency(std::size_t k, std::size_t n) {
    return static_cast<double>(std::min(k, n - k)) / static_cast<double>(n);
}

}  // namespace

Tensor ideal_highpass(std::size_t height, std::size_t width, double cutoff) {
    if (height == 0 || width == 0) throw DimensionError("ideal_highpass: empty size");
    if (!(cutoff >= 0.0 && cutoff < 1.0)) throw ValidationError("ideal_highpass: cutoff must lie in [0,1)");
    Tensor t(Shape{1, height, width}, 0.0);
    auto v = t.mutable_values();
    for (std::size_t u = 0; u < height; ++u)
        for (std::size_t w = 0; w < width; ++w) {
            // 2 * (cycles per sample) maps Nyquist to 1.
            const double fu = 2.0 * normalized_frequency(u, height), fw = 2.0 * normalized_frequency(w, width);
            v[u * width + w] = std::sqrt(fu * fu + fw * fw) > cutoff ? 1.0 : 0.0;
        }
    v[0] = 0.0;
    return t;
}

bool is_conjugate_symmetric(const Tensor& filter) {
    if (filter.rank() != 3 || filter.size(0) != 1) return false;
    const std::size_t h = filter.size(1), w = filter.size(2);
    if (filter[0] != 0.0) return false;
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v)
            if (filter[u * w + v] != filter[((h - u) % h) * w + (w - v) % w]) return false;
    return true;
}

Tensor spectral_highpass(const Tensor& features, const Tensor& filter) {
    if (features.rank() != 3) throw DimensionError("spectral_highpass: features must be [C,H,W]");
    if (filter.shape() != Shape{1, features.size(1), features.size(2)})
        throw DimensionError("spectral_highpass: filter " + shape_str(filter.shape()) + " does not match features " +
                             shape_str(features.shape()));
    const ComplexTensor spec = fft2(features);
    const Tensor t = expand_channels(filter, features.size(0));
    const ComplexTensor back = ifft2({mul(spec.re, t), mul(spec.im, t)});
    double residue = 0.0;
    for (double v : back.im.values()) residue = std::max(residue, std::fabs(v));
    if (residue > kImagTolerance)
        throw NumericalError("spectral_highpass: imaginary residue " + std::to_string(residue) +
                             " (filter not conjugate-symmetric?)");
    return back.re;
}

Tensor channel_attention(const Tensor& highpassed, const AttentionMlp& mlp) {
    if (highpassed.rank() != 3) throw DimensionError("channel_attention: input must be [C,H,W]");
    const std::size_t c = highpassed.size(0);
    if (mlp.w1.rank() != 2 || mlp.w1.size(1) != c || mlp.w2.rank() != 2 || mlp.w2.size(0) != c)
        throw DimensionError("channel_attention: MLP is not shaped for " + std::to_string(c) + " channels");
    const Tensor pooled = reshape(global_avg_pool(abs(highpassed)), {1, c});
    const Tensor hidden = gelu(linear(pooled, mlp.w1, mlp.b1));
    return reshape(sigmoid(linear(hidden, mlp.w2, mlp.b2)), {c, 1, 1});
}

Tensor modulate(const Tensor& features, const Tensor& scores) {
    if (features.rank() != 3 || scores.shape() != Shape{features.size(0), 1, 1})
        throw DimensionError("modulate: scores " + shape_str(scores.shape()) + " do not match features " +
                             shape_str(features.shape()));
    return mul(features, expand_spatial(scores, features.size(1), features.size(2)));
}

void MaskConfig::validate() const {
    if (feature_channels < 2 || feature_channels % 2 != 0)
        throw ValidationError("mask: feature_channels must be even and >= 2");
    if (unet_channels == 0) throw ValidationError("mask: unet_channels must be positive");
    if (!(cutoff >= 0.0 && cutoff < 1.0)) throw ValidationError("mask: cutoff must lie in [0,1)");
    if (!(output_init_std >= 0.0)) throw ValidationError("mask: output_init_std must be non-negative");
}

namespace {

void add_conv(ParamStore& ps, const std::string& name, std::size_t cout, std::size_t cin, std::size_t k,
              double stddev, Rng& rng) {
    std::vector<double> w(cout * cin * k * k);
    for (double& v : w) v = rng.normal(0.0, stddev);
    ps.add(name + ".weight", Tensor({cout, cin, k, k}, std::move(w)));
    ps.add(name + ".bias", Tensor(Shape{cout}, 0.0));
}

void add_linear(ParamStore& ps, const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
    std::vector<double> w(out * in);
    for (double& v : w) v = rng.normal(0.0, std::sqrt(1.0 / static_cast<double>(in)));
    ps.add(name + ".weight", Tensor({out, in}, std::move(w)));
    ps.add(name + ".bias", Tensor(Shape{out}, 0.0));
}

double he_std(std::size_t cin, std::size_t k) { return std::sqrt(2.0 / static_cast<double>(cin * k * k)); }

}  // namespace

MaskPredictor::MaskPredictor(MaskConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(mix_seed(seed ^ 0x6d61736bULL));
    const std::size_t c = config_.feature_channels, u = config_.unet_channels;
    add_conv(params_, "enc.conv0", c, 3, 3, he_std(3, 3), rng);
    add_conv(params_, "enc.conv1", c, c, 3, he_std(c, 3), rng);
    add_conv(params_, "enc.conv2", c, c, 3, he_std(c, 3), rng);
    add_linear(params_, "mlp.fc1", c / 2, c, rng);
    add_linear(params_, "mlp.fc2", c, c / 2, rng);
    add_conv(params_, "unet.e0", u, c, 3, he_std(c, 3), rng);
    add_conv(params_, "unet.d1", u, u, 3, he_std(u, 3), rng);
    add_conv(params_, "unet.d2", 2 * u, u, 3, he_std(u, 3), rng);
    add_conv(params_, "unet.u1", u, 3 * u, 3, he_std(3 * u, 3), rng);
    add_conv(params_, "unet.u0", u, 2 * u, 3, he_std(2 * u, 3), rng);
    add_conv(params_, "unet.out", 1, u, 1, config_.zero_init_output ? 0.0 : config_.output_init_std, rng);
}

Tensor MaskPredictor::conv(const Tensor& x, const char* name, std::size_t stride) const {
    const std::string n(name);
    return conv2d(x, params_.get(n + ".weight"), params_.get(n + ".bias"), {stride, Padding::zero});
}

Tensor MaskPredictor::encode(const Tensor& image) const {
    if (image.rank() != 3 || image.size(0) != 3)
        throw DimensionError("encode_features: image must be [3,H,W], got " + shape_str(image.shape()));
    if (image.size(1) < 4 || image.size(2) < 4)
        throw DimensionError("encode_features: image " + shape_str(image.shape()) + " is smaller than the stride 4");
    Tensor f = gelu(conv(image, "enc.conv0", 2));
    f = gelu(conv(f, "enc.conv1", 2));
    return conv(f, "enc.conv2");
}

AttentionMlp MaskPredictor::mlp() const {
    return {params_.get("mlp.fc1.weight"), params_.get("mlp.fc1.bias"), params_.get("mlp.fc2.weight"),
            params_.get("mlp.fc2.bias")};
}

Tensor MaskPredictor::predict(const Tensor& modulated, std::size_t height, std::size_t width, Tensor* raw) const {
    if (height == 0 || width == 0) throw DimensionError("predict_mask: target size must be at least 1x1");
    if (modulated.rank() != 3 || modulated.size(0) != config_.feature_channels)
        throw DimensionError("predict_mask: features " + shape_str(modulated.shape()) + " do not have " +
                             std::to_string(config_.feature_channels) + " channels");
    const Tensor e0 = gelu(conv(modulated, "unet.e0"));
    const Tensor d1 = gelu(conv(e0, "unet.d1", 2));
    const Tensor d2 = gelu(conv(d1, "unet.d2", 2));
    const Tensor u1 =
        gelu(conv(concat_channels(bilinear_resize(d2, d1.size(1), d1.size(2)), d1), "unet.u1"));
    const Tensor u0 =
        gelu(conv(concat_channels(bilinear_resize(u1, e0.size(1), e0.size(2)), e0), "unet.u0"));
    const Tensor m = sigmoid(conv(u0, "unet.out"));
    if (raw) *raw = m;
    return bilinear_resize(m, height, width);
}

MaskOutputs MaskPredictor::forward(const Tensor& image) const {
    MaskOutputs out;
    out.features = encode(image);
    if (config_.use_channel_attention) {
        out.highpass =
            spectral_highpass(out.features, ideal_highpass(out.features.size(1), out.features.size(2), config_.cutoff));
        out.scores = channel_attention(out.highpass, mlp());
        out.modulated = modulate(out.features, out.scores);
    } else {
        out.modulated = out.features;
    }
    out.mask = predict(out.modulated, image.size(1), image.size(2), &out.raw_mask);
    return out;
}

}  // namespace drs::freqmask
