#pragma once

// Encoder-decoder rain removal network. Encoder levels stack depthwise
// convolution blocks, the bottleneck stacks full self-attention blocks and
// decoder levels stack (optionally top-k sparse) self-attention blocks. The
// network predicts a correction that is added to the input image.

#include "derainsplat/ad/params.hpp"
#include "derainsplat/ad/tensor.hpp"
#include "derainsplat/common/random.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace drs::enhance {

using ad::ParamStore;
using ad::Tensor;

enum class AttentionMode { full, sparse_topk };

AttentionMode parse_attention_mode(const std::string& s);
std::string attention_mode_name(AttentionMode m);

struct EnhancerConfig {
    /// Resolution levels including the bottleneck.
    std::size_t levels = 3;
    /// One entry per non-bottleneck level, finest first (length levels-1).
    std::vector<std::size_t> encoder_blocks{2, 2};
    std::size_t bottleneck_blocks = 2;
    /// One entry per non-bottleneck level, finest first (length levels-1).
    std::vector<std::size_t> decoder_blocks{2, 2};
    std::size_t base_channels = 8;
    AttentionMode attention = AttentionMode::sparse_topk;
    double topk_fraction = 0.5;
    std::size_t ffn_expansion = 2;

    void validate() const;
    /// Multiple that image sides are padded to internally.
    std::size_t size_multiple() const { return std::size_t{1} << (levels - 1); }
};

// --- blocks -------------------------------------------------------------------

struct DwConvWeights {
    Tensor dw1, b1, ln_gamma, ln_beta, dw2, b2;
};

/// dwconv -> channel layer norm -> GELU -> dwconv, plus x.
Tensor dwconv_block(const Tensor& x, const DwConvWeights& w);

struct AttentionWeights {
    Tensor ln1_gamma, ln1_beta;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gamma, ln2_beta;
    Tensor w1, b1, w2, b2;
};

/// Number of logits kept per query row.
std::size_t topk_count(double fraction, std::size_t tokens);

/// Row-stochastic attention matrix [HW,HW] of the block for input x [C,H,W].
Tensor attention_matrix(const Tensor& x, const AttentionWeights& w, AttentionMode mode, double topk_fraction);

/// Pre-norm self-attention over spatial tokens plus a GELU feed-forward,
/// both residual. Output has the shape of x.
Tensor attention_block(const Tensor& x, const AttentionWeights& w, AttentionMode mode, double topk_fraction);

DwConvWeights make_dwconv_weights(std::size_t channels, Rng& rng);
AttentionWeights make_attention_weights(std::size_t channels, std::size_t hidden, Rng& rng);

// --- network -------------------------------------------------------------------

class Enhancer {
public:
    /// Randomly initialized weights; the output convolution starts at zero so
    /// a fresh network is the identity on [0,1] images.
    Enhancer(EnhancerConfig config, std::uint64_t seed);

    const EnhancerConfig& config() const noexcept { return config_; }
    ParamStore& params() noexcept { return params_; }
    const ParamStore& params() const noexcept { return params_; }

    /// Differentiable forward pass on an image [3,H,W]. The output is clamped
    /// to [0,1] unless `clamp_output` is false (used for training, where the
    /// clamp would zero gradients at saturated pixels).
    Tensor forward(const Tensor& image, bool clamp_output = true) const;
    /// Forward pass without recording on any tape.
    Tensor enhance(const Tensor& image) const;

    void freeze() { params_.set_frozen(true); }
    bool frozen() const noexcept { return params_.frozen(); }

private:
    DwConvWeights dwconv_at(const std::string& prefix) const;
    AttentionWeights attention_at(const std::string& prefix) const;
    std::size_t channels_at(std::size_t level) const { return config_.base_channels << level; }

    EnhancerConfig config_;
    ParamStore params_;
};

// --- training ------------------------------------------------------------------

struct ImagePair {
    Tensor rainy;
    Tensor clean;
};

struct TrainConfig {
    std::size_t epochs = 20;
    double lr = 2e-3;
    std::size_t batch_size = 4;
    /// Side of random square training crops; 0 trains on whole images.
    std::size_t crop = 16;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean training L1 per epoch
    std::vector<double> val_psnr;    // mean validation PSNR per epoch
    std::size_t best_epoch = 0;
    double best_val_psnr = 0.0;
};

/// Mean PSNR of enhance(rainy) against clean over the pairs.
double mean_psnr(const Enhancer& net, const std::vector<ImagePair>& pairs);

/// Minimizes L1(enhance(rainy), clean) with Adam. After every epoch the
/// weights are scored on `val` (or on `train` if `val` is empty) and the best
/// epoch's weights are left in `net`.
TrainReport train_enhancer(Enhancer& net, const std::vector<ImagePair>& train, const std::vector<ImagePair>& val,
                           const TrainConfig& cfg);

}  // namespace drs::enhance
