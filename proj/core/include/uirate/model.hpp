#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "uirate/data.hpp"
#include "uirate/fusion.hpp"
#include "uirate/image_encoder.hpp"
#include "uirate/text_encoder.hpp"

namespace uirate {

enum class LossKind { Mse, Mae };
enum class TargetScale { Raw, MinMax };
enum class TextBackbone { Transformer, SimpleRecurrent };

LossKind loss_from_string(const std::string& s);
const char* to_string(LossKind k);
TargetScale target_scale_from_string(const std::string& s);
const char* to_string(TargetScale s);
TextBackbone text_backbone_from_string(const std::string& s);
const char* to_string(TextBackbone b);

struct ModelConfig {
    ImageEncoderConfig image;
    TextEncoderConfig text;
    FusionConfig fusion;
    double learning_rate = 5e-5;
    int epochs = 20;
    int batch_size = 8;
    double grad_clip = 1.0;
    std::uint64_t seed = 1234;
    LossKind loss = LossKind::Mse;
    TargetScale target_scale = TargetScale::Raw;
    TextBackbone text_backbone = TextBackbone::Transformer;

    void validate() const;  // also requires d_v == d_t == fusion embed width

    std::string to_json_string(int indent = -1) const;
    static ModelConfig from_json_string(const std::string& json);  // closed key set
};

// Paper-faithful scale: 224 px, widths 512, lr 5e-5, clip 1.0, 20 epochs.
ModelConfig paper_preset();
// Laptop-budget scale: 64 px, widths 128, sized so overfit runs finish in
// minutes.
ModelConfig desk_preset();

// Caption and category joined by the literal separator before tokenization.
std::string sample_text(const ScreenSample& s);

// Maps a raw [1,5] rating onto the training scale and back.
double target_to_model(double rating, TargetScale scale);
double target_to_raw(double model_value, TargetScale scale);

class RatingModel {
public:
    RatingModel(const ModelConfig& cfg, const Vocabulary& vocab);

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }

    TokenRow tokenize_sample(const ScreenSample& s) const;

    Tensor encode_image(const Tensor& img) const;
    Tensor encode_text(const TokenRow& row) const;
    // Unclamped scalar on the model's target scale.
    Tensor predict(const Tensor& img, const TokenRow& row, bool train_mode);
    // Raw-scale convenience for inference paths.
    double predict_rating(const Tensor& img, const TokenRow& row);

    NamedParams parameters() const;
    std::mt19937_64& dropout_rng() { return dropout_rng_; }

    const ImageEncoder& image_encoder() const { return image_; }
    const FusionHead& fusion_head() const { return fusion_; }

private:
    ModelConfig cfg_;
    Vocabulary vocab_;
    std::mt19937_64 init_rng_;
    ImageEncoder image_;
    std::optional<TextEncoder> text_;
    std::optional<SimpleRecurrentEncoder> text_rnn_;
    FusionHead fusion_;
    std::mt19937_64 dropout_rng_;
};

}  // namespace uirate
