#include "derainsplat/enhance/enhancer.hpp"

#include "derainsplat/ad/ops.hpp"
#include "derainsplat/ad/optim.hpp"
#include "derainsplat/common/error.hpp"
#include "derainsplat/loss/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace drs::enhance {

using namespace drs::ad;

AttentionMode parse_attention_mode(const std::string& s) {
    if (s == "full") return AttentionMode::full;
    if (s == "sparse-topk") return AttentionMode::sparse_topk;
    throw ValidationError("unknown attention mode '" + s + "' (expected full or sparse-topk)");
}

std::string attention_mode_name(AttentionMode m) { return m == AttentionMode::full ? "full" : "sparse-topk"; }

void EnhancerConfig::validate() const {
    if (levels < 1 || levels > 8) throw ValidationError("enhancer: levels must lie in [1,8]");
    if (encoder_blocks.size() != levels - 1)
        throw ValidationError("enhancer: encoder_blocks needs " + std::to_string(levels - 1) + " entries, got " +
                              std::to_string(encoder_blocks.size()));
    if (decoder_blocks.size() != levels - 1)
        throw ValidationError("enhancer: decoder_blocks needs " + std::to_string(levels - 1) + " entries, got " +
                              std::to_string(decoder_blocks.size()));
    if (base_channels == 0 || base_channels % 2 != 0) throw ValidationError("enhancer: base_channels must be even");
    if (!(topk_fraction > 0.0 && topk_fraction <= 1.0))
        throw ValidationError("enhancer: topk_fraction must lie in (0,1]");
    if (ffn_expansion == 0) throw ValidationError("enhancer: ffn_expansion must be positive");
}

// --- blocks -------------------------------------------------------------------

Tensor dwconv_block(const Tensor& x, const DwConvWeights& w) {
    if (x.rank() != 3) throw DimensionError("dwconv_block: input must be [C,H,W], got " + shape_str(x.shape()));
    const std::size_t c = x.size(0);
    if (w.dw1.shape() != Shape{c, 3, 3} || w.dw2.shape() != Shape{c, 3, 3} || w.ln_gamma.shape() != Shape{c})
        throw DimensionError("dwconv_block: weights are not shaped for " + std::to_string(c) + " channels");
    Tensor h = depthwise_conv2d(x, w.dw1, w.b1);
    h = gelu(layer_norm_channels(h, w.ln_gamma, w.ln_beta));
    h = depthwise_conv2d(h, w.dw2, w.b2);
    return add(x, h);
}

std::size_t topk_count(double fraction, std::size_t tokens) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("topk_fraction must lie in (0,1]");
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(tokens) - 1e-9));
    return std::clamp<std::size_t>(k, 1, tokens);
}

namespace {

Tensor to_tokens(const Tensor& x) { return transpose(reshape(x, {x.size(0), x.size(1) * x.size(2)})); }

Tensor from_tokens(const Tensor& t, std::size_t h, std::size_t w) {
    return reshape(transpose(t), {t.size(1), h, w});
}

struct AttentionParts {
    Tensor weights;  // [N,N]
    Tensor values;   // [N,C]
};

AttentionParts attend(const Tensor& tokens, const AttentionWeights& w, AttentionMode mode, double topk_fraction) {
    const std::size_t n = tokens.size(0), c = tokens.size(1);
    if (w.wq.shape() != Shape{c, c})
        throw DimensionError("attention_block: weights are not shaped for " + std::to_string(c) + " channels");
    const Tensor h = layer_norm(tokens, w.ln1_gamma, w.ln1_beta);
    const Tensor q = linear(h, w.wq, w.bq), k = linear(h, w.wk, w.bk), v = linear(h, w.wv, w.bv);
    const Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(c)));
    const std::size_t kept = mode == AttentionMode::full ? n : topk_count(topk_fraction, n);
    return {topk_softmax_rows(logits, kept), v};
}

}  // namespace

Tensor attention_matrix(const Tensor& x, const AttentionWeights& w, AttentionMode mode, double topk_fraction) {
    if (x.rank() != 3) throw DimensionError("attention_block: input must be [C,H,W], got " + shape_str(x.shape()));
    return attend(to_tokens(x), w, mode, topk_fraction).weights;
}

Tensor attention_block(const Tensor& x, const AttentionWeights& w, AttentionMode mode, double topk_fraction) {
    if (x.rank() != 3) throw DimensionError("attention_block: input must be [C,H,W], got " + shape_str(x.shape()));
    if (!(topk_fraction > 0.0 && topk_fraction <= 1.0))
        throw ValidationError("attention_block: topk_fraction must lie in (0,1]");
    Tensor t = to_tokens(x);
    const AttentionParts a = attend(t, w, mode, topk_fraction);
    t = add(t, linear(matmul(a.weights, a.values), w.wo, w.bo));
    const Tensor f = linear(gelu(linear(layer_norm(t, w.ln2_gamma, w.ln2_beta), w.w1, w.b1)), w.w2, w.b2);
    t = add(t, f);
    return from_tokens(t, x.size(1), x.size(2));
}

namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

DwConvWeights make_dwconv_weights(std::size_t c, Rng& rng) {
    DwConvWeights w;
    w.dw1 = normal_tensor({c, 3, 3}, std::sqrt(1.0 / 9.0), rng);
    w.b1 = Tensor(Shape{c}, 0.0);
    w.ln_gamma = Tensor(Shape{c}, 1.0);
    w.ln_beta = Tensor(Shape{c}, 0.0);
    w.dw2 = normal_tensor({c, 3, 3}, 0.5 * std::sqrt(1.0 / 9.0), rng);
    w.b2 = Tensor(Shape{c}, 0.0);
    return w;
}

AttentionWeights make_attention_weights(std::size_t c, std::size_t hidden, Rng& rng) {
    const double sc = std::sqrt(1.0 / static_cast<double>(c)), sh = std::sqrt(1.0 / static_cast<double>(hidden));
    AttentionWeights w;
    w.ln1_gamma = Tensor(Shape{c}, 1.0);
    w.ln1_beta = Tensor(Shape{c}, 0.0);
    w.wq = normal_tensor({c, c}, sc, rng);
    w.bq = Tensor(Shape{c}, 0.0);
    w.wk = normal_tensor({c, c}, sc, rng);
    w.bk = Tensor(Shape{c}, 0.0);
    w.wv = normal_tensor({c, c}, sc, rng);
    w.bv = Tensor(Shape{c}, 0.0);
    w.wo = normal_tensor({c, c}, 0.5 * sc, rng);
    w.bo = Tensor(Shape{c}, 0.0);
    w.ln2_gamma = Tensor(Shape{c}, 1.0);
    w.ln2_beta = Tensor(Shape{c}, 0.0);
    w.w1 = normal_tensor({hidden, c}, sc, rng);
    w.b1 = Tensor(Shape{hidden}, 0.0);
    w.w2 = normal_tensor({c, hidden}, 0.5 * sh, rng);
    w.b2 = Tensor(Shape{c}, 0.0);
    return w;
}

// --- network -------------------------------------------------------------------

namespace {

void add_dwconv(ParamStore& ps, const std::string& p, DwConvWeights w) {
    ps.add(p + ".dw1", w.dw1);
    ps.add(p + ".b1", w.b1);
    ps.add(p + ".ln.gamma", w.ln_gamma);
    ps.add(p + ".ln.beta", w.ln_beta);
    ps.add(p + ".dw2", w.dw2);
    ps.add(p + ".b2", w.b2);
}

void add_attention(ParamStore& ps, const std::string& p, AttentionWeights w) {
    ps.add(p + ".ln1.gamma", w.ln1_gamma);
    ps.add(p + ".ln1.beta", w.ln1_beta);
    ps.add(p + ".wq", w.wq);
    ps.add(p + ".bq", w.bq);
    ps.add(p + ".wk", w.wk);
    ps.add(p + ".bk", w.bk);
    ps.add(p + ".wv", w.wv);
    ps.add(p + ".bv", w.bv);
    ps.add(p + ".wo", w.wo);
    ps.add(p + ".bo", w.bo);
    ps.add(p + ".ln2.gamma", w.ln2_gamma);
    ps.add(p + ".ln2.beta", w.ln2_beta);
    ps.add(p + ".ffn.w1", w.w1);
    ps.add(p + ".ffn.b1", w.b1);
    ps.add(p + ".ffn.w2", w.w2);
    ps.add(p + ".ffn.b2", w.b2);
}

void add_conv(ParamStore& ps, const std::string& p, std::size_t cout, std::size_t cin, std::size_t k, double gain,
              Rng& rng) {
    ps.add(p + ".weight", normal_tensor({cout, cin, k, k}, gain * std::sqrt(1.0 / static_cast<double>(cin * k * k)), rng));
    ps.add(p + ".bias", Tensor(Shape{cout}, 0.0));
}

std::string level_name(const char* part, std::size_t level) { return std::string(part) + std::to_string(level); }

}  // namespace

Enhancer::Enhancer(EnhancerConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(mix_seed(seed));
    const std::size_t top = config_.levels - 1;
    add_conv(params_, "embed", channels_at(0), 3, 3, 1.0, rng);
    for (std::size_t l = 0; l < top; ++l) {
        const std::string p = level_name("enc", l);
        for (std::size_t b = 0; b < config_.encoder_blocks[l]; ++b)
            add_dwconv(params_, p + ".block" + std::to_string(b), make_dwconv_weights(channels_at(l), rng));
        add_conv(params_, p + ".down", channels_at(l + 1), channels_at(l), 3, 1.0, rng);
    }
    for (std::size_t b = 0; b < config_.bottleneck_blocks; ++b)
        add_attention(params_, "bottleneck.block" + std::to_string(b),
                      make_attention_weights(channels_at(top), config_.ffn_expansion * channels_at(top), rng));
    for (std::size_t l = top; l-- > 0;) {
        const std::string p = level_name("dec", l);
        add_conv(params_, p + ".up", channels_at(l), channels_at(l + 1), 1, 1.0, rng);
        add_conv(params_, p + ".fuse", channels_at(l), 2 * channels_at(l), 1, 1.0, rng);
        for (std::size_t b = 0; b < config_.decoder_blocks[l]; ++b)
            add_attention(params_, p + ".block" + std::to_string(b),
                          make_attention_weights(channels_at(l), config_.ffn_expansion * channels_at(l), rng));
    }
    add_conv(params_, "out", 3, channels_at(0), 3, 0.0, rng);
}

DwConvWeights Enhancer::dwconv_at(const std::string& p) const {
    return {params_.get(p + ".dw1"),      params_.get(p + ".b1"),  params_.get(p + ".ln.gamma"),
            params_.get(p + ".ln.beta"), params_.get(p + ".dw2"), params_.get(p + ".b2")};
}

AttentionWeights Enhancer::attention_at(const std::string& p) const {
    AttentionWeights w;
    w.ln1_gamma = params_.get(p + ".ln1.gamma");
    w.ln1_beta = params_.get(p + ".ln1.beta");
    w.wq = params_.get(p + ".wq");
    w.bq = params_.get(p + ".bq");
    w.wk = params_.get(p + ".wk");
    w.bk = params_.get(p + ".bk");
    w.wv = params_.get(p + ".wv");
    w.bv = params_.get(p + ".bv");
    w.wo = params_.get(p + ".wo");
    w.bo = params_.get(p + ".bo");
    w.ln2_gamma = params_.get(p + ".ln2.gamma");
    w.ln2_beta = params_.get(p + ".ln2.beta");
    w.w1 = params_.get(p + ".ffn.w1");
    w.b1 = params_.get(p + ".ffn.b1");
    w.w2 = params_.get(p + ".ffn.w2");
    w.b2 = params_.get(p + ".ffn.b2");
    return w;
}

Tensor Enhancer::forward(const Tensor& image, bool clamp_output) const {
    if (image.rank() != 3 || image.size(0) != 3)
        throw DimensionError("enhance: image must be [3,H,W], got " + shape_str(image.shape()));
    const std::size_t h = image.size(1), w = image.size(2);
    if (h == 0 || w == 0) throw DimensionError("enhance: empty image");

    const std::size_t m = config_.size_multiple();
    const std::size_t ph = (m - h % m) % m, pw = (m - w % m) % m;
    Tensor x = image;
    if (ph || pw) x = pad2d(image, 0, ph, 0, pw, (ph < h && pw < w) ? Padding::reflect : Padding::zero);

    auto conv = [this](const Tensor& in, const std::string& p, std::size_t stride = 1) {
        return conv2d(in, params_.get(p + ".weight"), params_.get(p + ".bias"), {stride, Padding::zero});
    };

    const std::size_t top = config_.levels - 1;
    Tensor f = conv(x, "embed");
    std::vector<Tensor> skips;
    for (std::size_t l = 0; l < top; ++l) {
        const std::string p = level_name("enc", l);
        for (std::size_t b = 0; b < config_.encoder_blocks[l]; ++b)
            f = dwconv_block(f, dwconv_at(p + ".block" + std::to_string(b)));
        skips.push_back(f);
        f = conv(f, p + ".down", 2);
    }
    for (std::size_t b = 0; b < config_.bottleneck_blocks; ++b)
        f = attention_block(f, attention_at("bottleneck.block" + std::to_string(b)), AttentionMode::full, 1.0);
    for (std::size_t l = top; l-- > 0;) {
        const std::string p = level_name("dec", l);
        const Tensor& skip = skips[l];
        f = conv(bilinear_resize(f, skip.size(1), skip.size(2)), p + ".up");
        f = conv(concat_channels(f, skip), p + ".fuse");
        for (std::size_t b = 0; b < config_.decoder_blocks[l]; ++b)
            f = attention_block(f, attention_at(p + ".block" + std::to_string(b)), config_.attention,
                                config_.topk_fraction);
    }
    Tensor y = add(x, conv(f, "out"));
    if (ph || pw) y = crop2d(y, 0, 0, h, w);
    return clamp_output ? clamp(y, 0.0, 1.0) : y;
}

Tensor Enhancer::enhance(const Tensor& image) const {
    NoGradScope no_grad;
    return forward(image);
}

// --- training ------------------------------------------------------------------

double mean_psnr(const Enhancer& net, const std::vector<ImagePair>& pairs) {
    if (pairs.empty()) throw ValidationError("mean_psnr: no pairs");
    double s = 0.0;
    for (const auto& p : pairs) s += loss::psnr(net.enhance(p.rainy), p.clean);
    return s / static_cast<double>(pairs.size());
}

namespace {

void check_pairs(const char* what, const std::vector<ImagePair>& pairs) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (p.rainy.rank() != 3 || p.rainy.size(0) != 3 || p.rainy.shape() != p.clean.shape())
            throw DimensionError(std::string("train_enhancer: ") + what + " pair " + std::to_string(i) +
                                 " has inconsistent shapes " + shape_str(p.rainy.shape()) + " / " +
                                 shape_str(p.clean.shape()));
    }
}

std::vector<std::vector<double>> snapshot(const ParamStore& ps) {
    std::vector<std::vector<double>> out;
    for (const auto& [name, t] : ps.entries()) out.emplace_back(t->values().begin(), t->values().end());
    return out;
}

void restore(ParamStore& ps, const std::vector<std::vector<double>>& snap) {
    std::size_t i = 0;
    for (auto& [name, t] : ps.entries()) {
        auto v = t->mutable_values();
        std::copy(snap[i].begin(), snap[i].end(), v.begin());
        ++i;
    }
}

}  // namespace

TrainReport train_enhancer(Enhancer& net, const std::vector<ImagePair>& train, const std::vector<ImagePair>& val,
                           const TrainConfig& cfg) {
    if (train.empty()) throw ValidationError("train_enhancer: empty training set");
    if (cfg.epochs == 0 || cfg.batch_size == 0) throw ValidationError("train_enhancer: epochs and batch_size must be positive");
    check_pairs("training", train);
    check_pairs("validation", val);
    if (net.frozen()) throw ValidationError("train_enhancer: network is frozen");
    const std::vector<ImagePair>& scored = val.empty() ? train : val;

    Rng rng(mix_seed(cfg.seed ^ 0x656e68616e6365ULL));
    Adam opt;
    opt.add_group("enhancer", net.params().tensors(), cfg.lr);

    TrainReport report;
    report.best_val_psnr = mean_psnr(net, scored);
    auto best = snapshot(net.params());

    std::vector<std::size_t> order(train.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            opt.zero_grad();
            for (std::size_t j = start; j < end; ++j) {
                const ImagePair& p = train[order[j]];
                Tensor rainy = p.rainy, clean = p.clean;
                const std::size_t h = rainy.size(1), w = rainy.size(2);
                if (cfg.crop > 0 && cfg.crop < h && cfg.crop < w) {
                    const std::size_t y0 = rng.below(h - cfg.crop + 1), x0 = rng.below(w - cfg.crop + 1);
                    rainy = crop2d(rainy, y0, x0, cfg.crop, cfg.crop);
                    clean = crop2d(clean, y0, x0, cfg.crop, cfg.crop);
                }
                Tape tape;
                TapeScope scope(tape);
                const Tensor l = l1(net.forward(rainy, false), clean);
                loss_sum += l.item();
                tape.backward(scale(l, 1.0 / static_cast<double>(end - start)));
            }
            opt.step();
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
        const double v = mean_psnr(net, scored);
        report.val_psnr.push_back(v);
        if (v > report.best_val_psnr) {
            report.best_val_psnr = v;
            report.best_epoch = epoch + 1;
            best = snapshot(net.params());
        }
    }
    restore(net.params(), best);
    opt.zero_grad();
    return report;
}

}  // namespace drs::enhance
