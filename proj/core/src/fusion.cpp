#include "uirate/fusion.hpp"

#include <stdexcept>

#include "uirate/ops.hpp"

namespace uirate {

void FusionConfig::validate() const {
    if (embed_dim < 1 || hidden_dim < 1) throw std::invalid_argument("FusionConfig: dims must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("FusionConfig: dropout must lie in [0, 1)");
}

Tensor fuse(const Tensor& v, const Tensor& t) {
    if (v.rank() != 1 || t.rank() != 1) throw std::invalid_argument("fuse: rank-1 inputs required");
    if (v.dim(0) != t.dim(0)) {
        throw std::invalid_argument("fuse: width mismatch " + std::to_string(v.dim(0)) + " vs " +
                                    std::to_string(t.dim(0)));
    }
    return concat({v, t, mul(v, t), abs(sub(v, t))}, 0);
}

FusionHead::FusionHead(const FusionConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    const int in = 4 * cfg_.embed_dim;
    w1_ = randn_param({in, cfg_.hidden_dim}, in, rng);
    b1_ = zeros_param({cfg_.hidden_dim});
    w2_ = randn_param({cfg_.hidden_dim, 1}, cfg_.hidden_dim, rng);
    b2_ = zeros_param({1});
}

Tensor FusionHead::fusion_forward(const Tensor& u) const {
    if (u.rank() != 1 || u.dim(0) != 4 * cfg_.embed_dim) {
        throw std::invalid_argument("fusion_forward: expected [" + std::to_string(4 * cfg_.embed_dim) +
                                    "], got " + shape_str(u.shape()));
    }
    return activate(linear(u, w1_, b1_), cfg_.activation);
}

Tensor FusionHead::predict_rating(const Tensor& h, bool train_mode, std::mt19937_64& rng) const {
    if (h.rank() != 1 || h.dim(0) != cfg_.hidden_dim) {
        throw std::invalid_argument("predict_rating: expected [" + std::to_string(cfg_.hidden_dim) +
                                    "], got " + shape_str(h.shape()));
    }
    return linear(dropout(h, cfg_.dropout, train_mode, rng), w2_, b2_);
}

Tensor FusionHead::forward(const Tensor& v, const Tensor& t, bool train_mode, std::mt19937_64& rng) const {
    return predict_rating(fusion_forward(fuse(v, t)), train_mode, rng);
}

void FusionHead::collect_parameters(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w1", w1_);
    out.emplace_back(prefix + ".b1", b1_);
    out.emplace_back(prefix + ".w2", w2_);
    out.emplace_back(prefix + ".b2", b2_);
}

}  // namespace uirate
