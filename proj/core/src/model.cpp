#include "uirate/model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace uirate {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

void require_keys(const nlohmann::json& j, const char* what, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": object expected");
    for (const char* k : keys) {
        if (!j.contains(k)) throw std::invalid_argument(std::string(what) + ": missing key '" + k + "'");
    }
    for (const auto& item : j.items()) {
        const bool known = std::any_of(keys.begin(), keys.end(),
                                       [&](const char* k) { return item.key() == k; });
        if (!known) throw std::invalid_argument(std::string(what) + ": unknown key '" + item.key() + "'");
    }
}

ModelConfig fixed_config(ModelConfig cfg, const Vocabulary& vocab) {
    if (cfg.text.vocab_size == 0) cfg.text.vocab_size = vocab.size();
    if (cfg.text.vocab_size < vocab.size()) {
        throw std::invalid_argument("ModelConfig: vocab_size " + std::to_string(cfg.text.vocab_size) +
                                    " smaller than vocabulary " + std::to_string(vocab.size()));
    }
    cfg.validate();
    return cfg;
}

}  // namespace

LossKind loss_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "mse") return LossKind::Mse;
    if (v == "mae") return LossKind::Mae;
    throw std::invalid_argument("unknown loss '" + s + "' (expected mse|mae)");
}

const char* to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "mae"; }

TargetScale target_scale_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "raw") return TargetScale::Raw;
    if (v == "minmax") return TargetScale::MinMax;
    throw std::invalid_argument("unknown target scale '" + s + "' (expected raw|minmax)");
}

const char* to_string(TargetScale s) { return s == TargetScale::Raw ? "raw" : "minmax"; }

TextBackbone text_backbone_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "transformer") return TextBackbone::Transformer;
    if (v == "simple-recurrent" || v == "simple_recurrent") return TextBackbone::SimpleRecurrent;
    throw std::invalid_argument("unknown text backbone '" + s + "' (expected transformer|simple-recurrent)");
}

const char* to_string(TextBackbone b) {
    return b == TextBackbone::Transformer ? "transformer" : "simple-recurrent";
}

void ModelConfig::validate() const {
    image.validate();
    text.validate();
    fusion.validate();
    if (learning_rate <= 0.0) throw std::invalid_argument("ModelConfig: learning_rate must be positive");
    if (grad_clip <= 0.0) throw std::invalid_argument("ModelConfig: grad_clip must be positive");
    if (epochs < 1) throw std::invalid_argument("ModelConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("ModelConfig: batch_size must be >= 1");
    if (image.embed_dim != fusion.embed_dim || text.out_dim != fusion.embed_dim) {
        throw std::invalid_argument("ModelConfig: fusion width " + std::to_string(fusion.embed_dim) +
                                    " must match image " + std::to_string(image.embed_dim) + " and text " +
                                    std::to_string(text.out_dim));
    }
}

std::string ModelConfig::to_json_string(int indent) const {
    nlohmann::json j;
    j["image"] = {{"input_size", image.input_size},
                  {"stem_channels", image.stem_channels},
                  {"stage_channels", image.stage_channels},
                  {"embed_dim", image.embed_dim},
                  {"block_activation", to_string(image.block_activation)},
                  {"expand_ratio", image.expand_ratio}};
    j["text"] = {{"vocab_size", text.vocab_size},   {"embed_dim", text.embed_dim},
                 {"layers", text.layers},           {"heads", text.heads},
                 {"max_len", text.max_len},         {"out_dim", text.out_dim}};
    j["fusion"] = {{"embed_dim", fusion.embed_dim},
                   {"hidden_dim", fusion.hidden_dim},
                   {"activation", to_string(fusion.activation)},
                   {"dropout", fusion.dropout}};
    j["learning_rate"] = learning_rate;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["grad_clip"] = grad_clip;
    j["seed"] = seed;
    j["loss"] = to_string(loss);
    j["target_scale"] = to_string(target_scale);
    j["text_backbone"] = to_string(text_backbone);
    return j.dump(indent);
}

ModelConfig ModelConfig::from_json_string(const std::string& json) {
    const nlohmann::json j = nlohmann::json::parse(json);
    require_keys(j, "ModelConfig",
                 {"image", "text", "fusion", "learning_rate", "epochs", "batch_size", "grad_clip", "seed",
                  "loss", "target_scale", "text_backbone"});
    require_keys(j["image"], "ModelConfig.image",
                 {"input_size", "stem_channels", "stage_channels", "embed_dim", "block_activation", "expand_ratio"});
    require_keys(j["text"], "ModelConfig.text",
                 {"vocab_size", "embed_dim", "layers", "heads", "max_len", "out_dim"});
    require_keys(j["fusion"], "ModelConfig.fusion", {"embed_dim", "hidden_dim", "activation", "dropout"});

    ModelConfig c;
    const auto& ji = j["image"];
    c.image.input_size = ji["input_size"].get<int>();
    c.image.stem_channels = ji["stem_channels"].get<int>();
    const auto stages = ji["stage_channels"].get<std::vector<int>>();
    if (stages.size() != 3) throw std::invalid_argument("ModelConfig.image: stage_channels must hold 3 entries");
    std::copy(stages.begin(), stages.end(), c.image.stage_channels.begin());
    c.image.embed_dim = ji["embed_dim"].get<int>();
    c.image.block_activation = activation_from_string(ji["block_activation"].get<std::string>());
    c.image.expand_ratio = ji["expand_ratio"].get<int>();

    const auto& jt = j["text"];
    c.text.vocab_size = jt["vocab_size"].get<int>();
    c.text.embed_dim = jt["embed_dim"].get<int>();
    c.text.layers = jt["layers"].get<int>();
    c.text.heads = jt["heads"].get<int>();
    c.text.max_len = jt["max_len"].get<int>();
    c.text.out_dim = jt["out_dim"].get<int>();

    const auto& jf = j["fusion"];
    c.fusion.embed_dim = jf["embed_dim"].get<int>();
    c.fusion.hidden_dim = jf["hidden_dim"].get<int>();
    c.fusion.activation = activation_from_string(jf["activation"].get<std::string>());
    c.fusion.dropout = jf["dropout"].get<double>();

    c.learning_rate = j["learning_rate"].get<double>();
    c.epochs = j["epochs"].get<int>();
    c.batch_size = j["batch_size"].get<int>();
    c.grad_clip = j["grad_clip"].get<double>();
    c.seed = j["seed"].get<std::uint64_t>();
    c.loss = loss_from_string(j["loss"].get<std::string>());
    c.target_scale = target_scale_from_string(j["target_scale"].get<std::string>());
    c.text_backbone = text_backbone_from_string(j["text_backbone"].get<std::string>());
    return c;
}

ModelConfig paper_preset() {
    ModelConfig c;
    c.image = {224, 16, {24, 48, 96}, 512, ActivationKind::HSwish, 2};
    c.text = {0, 256, 2, 4, 64, 512};
    c.fusion = {512, 512, ActivationKind::Swish, 0.1};
    c.learning_rate = 5e-5;
    c.epochs = 20;
    c.batch_size = 8;
    c.grad_clip = 1.0;
    return c;
}

ModelConfig desk_preset() {
    ModelConfig c;
    c.image = {64, 8, {16, 32, 64}, 128, ActivationKind::HSwish, 2};
    c.text = {0, 64, 2, 4, 32, 128};
    c.fusion = {128, 128, ActivationKind::Swish, 0.1};
    c.learning_rate = 1e-3;
    c.epochs = 20;
    c.batch_size = 8;
    c.grad_clip = 1.0;
    return c;
}

std::string sample_text(const ScreenSample& s) { return s.caption + " [SEP] " + s.category; }

double target_to_model(double rating, TargetScale scale) {
    return scale == TargetScale::MinMax ? (rating - 1.0) / 4.0 : rating;
}

double target_to_raw(double model_value, TargetScale scale) {
    return scale == TargetScale::MinMax ? 1.0 + 4.0 * model_value : model_value;
}

RatingModel::RatingModel(const ModelConfig& cfg, const Vocabulary& vocab)
    : cfg_(fixed_config(cfg, vocab)),
      vocab_(vocab),
      init_rng_(cfg_.seed),
      image_(cfg_.image, init_rng_),
      fusion_(cfg_.fusion, init_rng_),
      dropout_rng_(cfg_.seed ^ 0x9E3779B97F4A7C15ull) {
    if (cfg_.text_backbone == TextBackbone::Transformer) {
        text_.emplace(cfg_.text, init_rng_);
    } else {
        text_rnn_.emplace(cfg_.text, init_rng_);
    }
}

TokenRow RatingModel::tokenize_sample(const ScreenSample& s) const {
    return tokenize(sample_text(s), vocab_, cfg_.text.max_len);
}

Tensor RatingModel::encode_image(const Tensor& img) const { return image_.encode(img); }

Tensor RatingModel::encode_text(const TokenRow& row) const {
    return text_ ? text_->encode_row(row) : text_rnn_->encode_row(row);
}

Tensor RatingModel::predict(const Tensor& img, const TokenRow& row, bool train_mode) {
    return fusion_.forward(encode_image(img), encode_text(row), train_mode, dropout_rng_);
}

double RatingModel::predict_rating(const Tensor& img, const TokenRow& row) {
    return target_to_raw(predict(img, row, /*train_mode=*/false).item(), cfg_.target_scale);
}

NamedParams RatingModel::parameters() const {
    NamedParams out;
    image_.collect_parameters("image", out);
    if (text_) {
        text_->collect_parameters("text", out);
    } else {
        text_rnn_->collect_parameters("text", out);
    }
    fusion_.collect_parameters("fusion", out);
    return out;
}

}  // namespace uirate
