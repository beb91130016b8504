#pragma once

#include <random>

#include "uirate/activations.hpp"
#include "uirate/init.hpp"
#include "uirate/tensor.hpp"

namespace uirate {

struct FusionConfig {
    int embed_dim = 512;   // width shared by the image and text vectors
    int hidden_dim = 512;
    ActivationKind activation = ActivationKind::Swish;
    double dropout = 0.1;

    void validate() const;
};

// concat(v, t, v*t, |v - t|), exactly that block order.
Tensor fuse(const Tensor& v, const Tensor& t);

class FusionHead {
public:
    FusionHead(const FusionConfig& cfg, std::mt19937_64& rng);

    const FusionConfig& config() const { return cfg_; }

    Tensor fusion_forward(const Tensor& u) const;  // activation(W1 u + b1)

    // Dropout (train mode only) then the affine map to one unclamped scalar.
    // Clamping to [1, 5] belongs to reporting, never to the model.
    Tensor predict_rating(const Tensor& h, bool train_mode, std::mt19937_64& rng) const;

    Tensor forward(const Tensor& v, const Tensor& t, bool train_mode, std::mt19937_64& rng) const;

    void collect_parameters(const std::string& prefix, NamedParams& out) const;

private:
    FusionConfig cfg_;
    Tensor w1_, b1_, w2_, b2_;
};

}  // namespace uirate
