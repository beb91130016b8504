#include "uirate/image_encoder.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

#include "uirate/conv.hpp"
#include "uirate/ops.hpp"

namespace uirate {

void ImageEncoderConfig::validate() const {
    if (input_size < 32 || input_size % 32 != 0) {
        throw std::invalid_argument("ImageEncoderConfig: input_size must be a positive multiple of 32, got " +
                                    std::to_string(input_size));
    }
    if (stem_channels < 1 || embed_dim < 1 || expand_ratio < 1) {
        throw std::invalid_argument("ImageEncoderConfig: channel counts must be positive");
    }
    for (int c : stage_channels) {
        if (c < 1) throw std::invalid_argument("ImageEncoderConfig: stage channels must be positive");
    }
}

ImageEncoder::ImageEncoder(const ImageEncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    stem_dw_w_ = randn_param({3, 3, 3}, 9, rng);
    stem_dw_b_ = zeros_param({3});
    stem_pw_w_ = randn_param({cfg_.stem_channels, 3}, 3, rng);
    stem_pw_b_ = zeros_param({cfg_.stem_channels});

    // Channel path: stem -> s0 -> s0 (tap at stride 8) -> s1 (16) -> s2 (32).
    const int chain[5] = {cfg_.stem_channels, cfg_.stage_channels[0], cfg_.stage_channels[0],
                          cfg_.stage_channels[1], cfg_.stage_channels[2]};
    for (int i = 0; i < 4; ++i) {
        Block b;
        b.in_ch = chain[i];
        b.out_ch = chain[i + 1];
        b.stride = 2;
        const int mid = b.in_ch * cfg_.expand_ratio;
        b.exp_w = randn_param({mid, b.in_ch}, b.in_ch, rng);
        b.exp_b = zeros_param({mid});
        b.dw_w = randn_param({mid, 3, 3}, 9, rng);
        b.dw_b = zeros_param({mid});
        b.prj_w = randn_param({b.out_ch, mid}, mid, rng);
        b.prj_b = zeros_param({b.out_ch});
        blocks_.push_back(std::move(b));
    }

    const int taps[3] = {cfg_.stage_channels[0], cfg_.stage_channels[1], cfg_.stage_channels[2]};
    for (int i = 0; i < 3; ++i) {
        tap_w_[static_cast<std::size_t>(i)] = randn_param({cfg_.embed_dim, taps[i]}, taps[i], rng);
        tap_b_[static_cast<std::size_t>(i)] = zeros_param({cfg_.embed_dim});
    }
    head_w_ = randn_param({3 * cfg_.embed_dim, cfg_.embed_dim}, 3 * cfg_.embed_dim, rng);
    head_b_ = zeros_param({cfg_.embed_dim});
    ln_g_ = ones_param({cfg_.embed_dim});
    ln_b_ = zeros_param({cfg_.embed_dim});
}

Tensor ImageEncoder::run_block(const Block& b, const Tensor& x) const {
    const ActivationKind act = cfg_.block_activation;
    Tensor y = activate(pointwise_conv2d(x, b.exp_w, b.exp_b), act);
    y = activate(depthwise_conv2d(y, b.dw_w, b.dw_b, b.stride), act);
    y = pointwise_conv2d(y, b.prj_w, b.prj_b);
    if (b.stride == 1 && b.in_ch == b.out_ch) y = add(y, x);
    return y;
}

Tensor ImageEncoder::encode(const Tensor& img) const {
    if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) != cfg_.input_size || img.dim(2) != cfg_.input_size) {
        throw std::invalid_argument("encode_image: expected [3," + std::to_string(cfg_.input_size) + "," +
                                    std::to_string(cfg_.input_size) + "], got " + shape_str(img.shape()));
    }
    const ActivationKind act = cfg_.block_activation;
    Tensor x = depthwise_conv2d(img, stem_dw_w_, stem_dw_b_, 2);
    x = activate(pointwise_conv2d(x, stem_pw_w_, stem_pw_b_), act);

    std::vector<Tensor> pooled;
    pooled.reserve(3);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        x = run_block(blocks_[i], x);
        if (i >= 1) {  // taps after cumulative strides 8, 16, 32
            const std::size_t tap = i - 1;
            pooled.push_back(global_avg_pool(pointwise_conv2d(x, tap_w_[tap], tap_b_[tap])));
        }
    }
    const Tensor projected = linear(concat(pooled, 0), head_w_, head_b_);
    return layer_norm(projected, ln_g_, ln_b_);
}

EncoderCostReport ImageEncoder::cost_report() const {
    EncoderCostReport rep;
    auto push = [&rep](std::string name, std::string kind, int d_f, int m, int n, int d_k, std::uint64_t macs) {
        rep.layers.push_back({std::move(name), std::move(kind), ConvShape{d_f, m, n, d_k}, macs});
        rep.total += macs;
    };
    auto dw_macs = [](int out, int ch) {
        return 9ull * static_cast<std::uint64_t>(ch) * static_cast<std::uint64_t>(out) * static_cast<std::uint64_t>(out);
    };
    auto pw_macs = [](int at, int m, int n) {
        return static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n) *
               static_cast<std::uint64_t>(at) * static_cast<std::uint64_t>(at);
    };

    int size = cfg_.input_size / 2;
    push("stem.dw", "depthwise", size, 3, 3, 3, dw_macs(size, 3));
    push("stem.pw", "pointwise", size, 3, cfg_.stem_channels, 1, pw_macs(size, 3, cfg_.stem_channels));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const int mid = b.in_ch * cfg_.expand_ratio;
        const std::string p = "block" + std::to_string(i);
        push(p + ".expand", "pointwise", size, b.in_ch, mid, 1, pw_macs(size, b.in_ch, mid));
        const int out = size / b.stride;
        push(p + ".dw", "depthwise", out, mid, mid, 3, dw_macs(out, mid));
        push(p + ".project", "pointwise", out, mid, b.out_ch, 1, pw_macs(out, mid, b.out_ch));
        size = out;
        if (i >= 1) {
            const std::size_t tap = i - 1;
            push("tap" + std::to_string(tap), "pointwise", size, b.out_ch, cfg_.embed_dim, 1,
                 pw_macs(size, b.out_ch, cfg_.embed_dim));
        }
    }
    return rep;
}

void ImageEncoder::collect_parameters(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".stem.dw_w", stem_dw_w_);
    out.emplace_back(prefix + ".stem.dw_b", stem_dw_b_);
    out.emplace_back(prefix + ".stem.pw_w", stem_pw_w_);
    out.emplace_back(prefix + ".stem.pw_b", stem_pw_b_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = prefix + ".block" + std::to_string(i);
        out.emplace_back(p + ".exp_w", b.exp_w);
        out.emplace_back(p + ".exp_b", b.exp_b);
        out.emplace_back(p + ".dw_w", b.dw_w);
        out.emplace_back(p + ".dw_b", b.dw_b);
        out.emplace_back(p + ".prj_w", b.prj_w);
        out.emplace_back(p + ".prj_b", b.prj_b);
    }
    for (int i = 0; i < 3; ++i) {
        out.emplace_back(prefix + ".tap" + std::to_string(i) + "_w", tap_w_[static_cast<std::size_t>(i)]);
        out.emplace_back(prefix + ".tap" + std::to_string(i) + "_b", tap_b_[static_cast<std::size_t>(i)]);
    }
    out.emplace_back(prefix + ".head_w", head_w_);
    out.emplace_back(prefix + ".head_b", head_b_);
    out.emplace_back(prefix + ".ln_g", ln_g_);
    out.emplace_back(prefix + ".ln_b", ln_b_);
}

std::string EncoderCostReport::to_json(int indent) const {
    nlohmann::json j;
    auto arr = nlohmann::json::array();
    for (const auto& l : layers) {
        arr.push_back({{"name", l.name},
                       {"kind", l.kind},
                       {"d_f", l.shape.d_f},
                       {"m", l.shape.m},
                       {"n", l.shape.n},
                       {"d_k", l.shape.d_k},
                       {"macs", l.macs}});
    }
    j["layers"] = arr;
    j["total_macs"] = total;
    return j.dump(indent);
}

}  // namespace uirate
