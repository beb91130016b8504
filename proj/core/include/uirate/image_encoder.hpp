#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "uirate/activations.hpp"
#include "uirate/conv_cost.hpp"
#include "uirate/init.hpp"
#include "uirate/tensor.hpp"

namespace uirate {

struct ImageEncoderConfig {
    int input_size = 224;  // must divide by 32
    int stem_channels = 16;
    std::array<int, 3> stage_channels = {24, 48, 96};
    int embed_dim = 512;  // d_v
    ActivationKind block_activation = ActivationKind::HSwish;
    int expand_ratio = 2;

    void validate() const;
};

// One convolution's analytic cost at its realized output resolution.
struct ConvLayerCost {
    std::string name;
    std::string kind;  // "depthwise" | "pointwise"
    ConvShape shape;   // d_f is the output spatial size, so stride folds in
    std::uint64_t macs = 0;
};

struct EncoderCostReport {
    std::vector<ConvLayerCost> layers;
    std::uint64_t total = 0;

    std::string to_json(int indent = -1) const;
};

// Depthwise-separable stack with three multiscale taps (cumulative strides
// 8, 16, 32), per-tap 1x1 to embed_dim, global average pooling, concat,
// linear projection and LayerNorm. Every spatial filter is depthwise, so
// the instrumented MAC count of a forward pass equals cost_report().total.
class ImageEncoder {
public:
    ImageEncoder(const ImageEncoderConfig& cfg, std::mt19937_64& rng);

    const ImageEncoderConfig& config() const { return cfg_; }

    Tensor encode(const Tensor& img) const;  // [3, S, S] -> [embed_dim]

    EncoderCostReport cost_report() const;

    void collect_parameters(const std::string& prefix, NamedParams& out) const;

private:
    // expand pointwise -> depthwise (stride) -> project pointwise, with a
    // residual join when the block keeps shape.
    struct Block {
        Tensor exp_w, exp_b;
        Tensor dw_w, dw_b;
        Tensor prj_w, prj_b;
        int in_ch = 0, out_ch = 0, stride = 1;
    };

    Tensor run_block(const Block& b, const Tensor& x) const;

    ImageEncoderConfig cfg_;
    Tensor stem_dw_w_, stem_dw_b_, stem_pw_w_, stem_pw_b_;
    std::vector<Block> blocks_;  // four stride-2 blocks after the stem
    std::array<Tensor, 3> tap_w_, tap_b_;
    Tensor head_w_, head_b_, ln_g_, ln_b_;
};

}  // namespace uirate
