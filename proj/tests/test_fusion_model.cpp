#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"

#include <nlohmann/json.hpp>

#include "uirate/grad_check.hpp"
#include "uirate/model.hpp"
#include "uirate/ops.hpp"

#include "test_helpers.hpp"

using namespace uirate;
using testutil::random_tensor;

namespace {

FusionConfig small_fusion() {
    FusionConfig cfg;
    cfg.embed_dim = 4;
    cfg.hidden_dim = 6;
    cfg.dropout = 0.5;
    return cfg;
}

Vocabulary tiny_vocab() { return Vocabulary::build({"login screen shopping tools clean layout"}); }

ModelConfig tiny_model_cfg() {
    ModelConfig cfg;
    cfg.image = {32, 4, {6, 8, 10}, 16, ActivationKind::HSwish, 2};
    cfg.text = {0, 16, 1, 4, 6, 16};
    cfg.fusion = {16, 12, ActivationKind::Swish, 0.1};
    cfg.learning_rate = 1e-3;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 77;
    return cfg;
}

Tensor param_of(const NamedParams& params, const std::string& name) {
    auto it = std::find_if(params.begin(), params.end(), [&](const auto& kv) { return kv.first == name; });
    REQUIRE(it != params.end());
    return it->second;
}

}  // namespace

TEST_CASE("fuse: hand examples and block order") {
    Tensor a = fuse(Tensor::from_vector({2}, {1, 0}), Tensor::from_vector({2}, {1, 0}));
    CHECK(a.values() == std::vector<double>{1, 0, 1, 0, 1, 0, 0, 0});

    Tensor b = fuse(Tensor::from_vector({2}, {2, -1}), Tensor::from_vector({2}, {0.5, 3}));
    CHECK(b.values() == std::vector<double>{2, -1, 0.5, 3, 1, -3, 1.5, 4});
}

TEST_CASE("fuse: width 4d and swap structure") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 1 + static_cast<int>(uniform_below(rng, 24));
        Tensor v = random_tensor(rng, {d});
        Tensor t = random_tensor(rng, {d});
        Tensor u = fuse(v, t);
        REQUIRE(u.shape() == (Shape{4 * d}));

        // Swapping the operands swaps the first two blocks and leaves the
        // product and absolute-difference blocks untouched.
        Tensor w = fuse(t, v);
        const auto& uv = u.values();
        const auto& wv = w.values();
        const auto dz = static_cast<std::size_t>(d);
        for (std::size_t i = 0; i < dz; ++i) {
            CHECK(uv[i] == wv[dz + i]);
            CHECK(uv[dz + i] == wv[i]);
            CHECK(uv[2 * dz + i] == wv[2 * dz + i]);
            CHECK(uv[3 * dz + i] == wv[3 * dz + i]);
        }
    }
}

TEST_CASE("fuse: identical inputs zero the difference block") {
    std::mt19937_64 rng(5);
    Tensor v = random_tensor(rng, {7});
    Tensor u = fuse(v, v);
    for (int i = 0; i < 7; ++i) {
        CHECK(u.values()[static_cast<std::size_t>(21 + i)] == 0.0);
        CHECK(u.values()[static_cast<std::size_t>(14 + i)] ==
              v.values()[static_cast<std::size_t>(i)] * v.values()[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("fuse: concatenation preserves the squared-norm identity") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor v = random_tensor(rng, {9});
        Tensor t = random_tensor(rng, {9});
        Tensor u = fuse(v, t);
        double blocks = 0.0;
        for (int i = 0; i < 9; ++i) {
            const double vi = v.values()[static_cast<std::size_t>(i)];
            const double ti = t.values()[static_cast<std::size_t>(i)];
            blocks += vi * vi + ti * ti + vi * ti * vi * ti + (vi - ti) * (vi - ti);
        }
        double whole = 0.0;
        for (double x : u.values()) whole += x * x;
        CHECK(std::abs(whole - blocks) < 1e-10);
    }
}

TEST_CASE("fuse: errors and gradient") {
    Tensor v2 = Tensor::from_vector({2}, {1, 2});
    Tensor v3 = Tensor::from_vector({3}, {1, 2, 3});
    try {
        fuse(v2, v3);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find('2') != std::string::npos);
        CHECK(msg.find('3') != std::string::npos);
    }
    CHECK_THROWS_AS(fuse(Tensor::zeros({2, 2}), Tensor::zeros({2, 2})), std::invalid_argument);

    std::mt19937_64 rng(11);
    // Keep |v - t| away from its kink at zero per coordinate.
    Tensor t = random_tensor(rng, {5}, false, 2.0, 3.0);
    Tensor x = random_tensor(rng, {5}, true, -1.0, 1.0);
    auto f = [&](const Tensor& a) { return sum_all(fuse(a, t)); };
    CHECK(grad_check(f, x) < 1e-6);
}

TEST_CASE("fusion_forward: zero input fixes at zero under Swish") {
    std::mt19937_64 rng(13);
    FusionHead head(small_fusion(), rng);
    Tensor h = head.fusion_forward(Tensor::zeros({16}));
    REQUIRE(h.shape() == (Shape{6}));
    for (double x : h.values()) CHECK(x == 0.0);  // b1 = 0, Swish(0) = 0
    CHECK_THROWS_AS(head.fusion_forward(Tensor::zeros({8})), std::invalid_argument);
}

TEST_CASE("fusion_forward: identity activation reduces to the affine map") {
    FusionConfig cfg = small_fusion();
    cfg.activation = ActivationKind::Identity;
    std::mt19937_64 rng(17);
    FusionHead head(cfg, rng);
    NamedParams params;
    head.collect_parameters("f", params);
    Tensor w1 = param_of(params, "f.w1");
    Tensor b1 = param_of(params, "f.b1");

    Tensor u = random_tensor(rng, {16});
    Tensor h = head.fusion_forward(u);
    for (int j = 0; j < 6; ++j) {
        double acc = b1.values()[static_cast<std::size_t>(j)];
        for (int i = 0; i < 16; ++i) {
            acc += u.values()[static_cast<std::size_t>(i)] * w1.values()[static_cast<std::size_t>(i * 6 + j)];
        }
        CHECK(h.values()[static_cast<std::size_t>(j)] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("fusion_forward: gradient through fuse and activation") {
    std::mt19937_64 rng(19);
    FusionConfig cfg = small_fusion();
    cfg.dropout = 0.0;
    FusionHead head(cfg, rng);
    Tensor t = random_tensor(rng, {4}, false, 1.5, 2.5);
    Tensor x = random_tensor(rng, {4}, true, -1.0, 1.0);
    std::mt19937_64 drop_rng(1);
    auto f = [&](const Tensor& a) { return head.forward(a, t, false, drop_rng); };
    CHECK(grad_check(f, x) < 1e-4);
}

TEST_CASE("predict_rating: dropout semantics and the zero-hidden shortcut") {
    std::mt19937_64 rng(23);
    FusionHead head(small_fusion(), rng);

    NamedParams params;
    head.collect_parameters("f", params);
    Tensor b2 = param_of(params, "f.b2");
    b2.values()[0] = 0.75;

    std::mt19937_64 drop(1);
    Tensor at_zero = head.predict_rating(Tensor::zeros({6}), false, drop);
    REQUIRE(at_zero.shape() == (Shape{1}));
    CHECK(at_zero.item() == 0.75);

    // Eval mode is dropout-free and bit-stable.
    Tensor h = random_tensor(rng, {6});
    Tensor e1 = head.predict_rating(h, false, drop);
    Tensor e2 = head.predict_rating(h, false, drop);
    CHECK(e1.item() == e2.item());

    // Train mode draws a mask from the supplied stream, reproducibly.
    std::mt19937_64 ra(9), rb(9);
    Tensor t1 = head.predict_rating(h, true, ra);
    Tensor t2 = head.predict_rating(h, true, rb);
    CHECK(t1.item() == t2.item());
    Tensor t3 = head.predict_rating(h, true, ra);  // stream advanced
    CHECK(t3.item() != t1.item());

    CHECK_THROWS_AS(head.predict_rating(Tensor::zeros({5}), false, drop), std::invalid_argument);
}

TEST_CASE("fusion config validation") {
    CHECK_NOTHROW(small_fusion().validate());
    FusionConfig cfg = small_fusion();
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.dropout = -0.1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_fusion();
    cfg.hidden_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("string conversions round trip and reject junk") {
    CHECK(loss_from_string("mse") == LossKind::Mse);
    CHECK(loss_from_string("MAE") == LossKind::Mae);
    CHECK(to_string(LossKind::Mse) == std::string("mse"));
    CHECK_THROWS_AS(loss_from_string("huber"), std::invalid_argument);

    CHECK(target_scale_from_string("raw") == TargetScale::Raw);
    CHECK(target_scale_from_string("MinMax") == TargetScale::MinMax);
    CHECK(to_string(TargetScale::MinMax) == std::string("minmax"));
    CHECK_THROWS_AS(target_scale_from_string("zscore"), std::invalid_argument);

    CHECK(text_backbone_from_string("transformer") == TextBackbone::Transformer);
    CHECK(text_backbone_from_string("simple-recurrent") == TextBackbone::SimpleRecurrent);
    CHECK(text_backbone_from_string("simple_recurrent") == TextBackbone::SimpleRecurrent);
    CHECK(to_string(TextBackbone::SimpleRecurrent) == std::string("simple-recurrent"));
    CHECK_THROWS_AS(text_backbone_from_string("lstm"), std::invalid_argument);
}

TEST_CASE("target scale maps") {
    CHECK(target_to_model(3.0, TargetScale::Raw) == 3.0);
    CHECK(target_to_raw(3.0, TargetScale::Raw) == 3.0);
    CHECK(target_to_model(1.0, TargetScale::MinMax) == 0.0);
    CHECK(target_to_model(5.0, TargetScale::MinMax) == 1.0);
    CHECK(target_to_model(3.0, TargetScale::MinMax) == 0.5);
    CHECK(target_to_raw(0.0, TargetScale::MinMax) == 1.0);
    CHECK(target_to_raw(1.0, TargetScale::MinMax) == 5.0);
    std::mt19937_64 rng(29);
    for (int i = 0; i < 50; ++i) {
        const double r = 1.0 + 4.0 * unit_uniform(rng);
        CHECK(target_to_raw(target_to_model(r, TargetScale::MinMax), TargetScale::MinMax) ==
              doctest::Approx(r).epsilon(1e-12));
    }
}

TEST_CASE("sample_text joins caption and category with the separator") {
    ScreenSample s;
    s.caption = "login screen";
    s.category = "tools";
    CHECK(sample_text(s) == "login screen [SEP] tools");
    const TokenRow row = tokenize(sample_text(s), tiny_vocab(), 8);
    CHECK(row.ids[2] == Vocabulary::kSep);
}

TEST_CASE("presets carry the pinned hyperparameters") {
    ModelConfig paper = paper_preset();
    CHECK(paper.image.input_size == 224);
    CHECK(paper.image.embed_dim == 512);
    CHECK(paper.text.out_dim == 512);
    CHECK(paper.fusion.embed_dim == 512);
    CHECK(paper.fusion.hidden_dim == 512);
    CHECK(paper.fusion.activation == ActivationKind::Swish);
    CHECK(paper.learning_rate == 5e-5);
    CHECK(paper.epochs == 20);
    CHECK(paper.grad_clip == 1.0);
    CHECK(paper.batch_size == 8);
    CHECK(paper.loss == LossKind::Mse);
    CHECK(paper.target_scale == TargetScale::Raw);
    CHECK(paper.text_backbone == TextBackbone::Transformer);

    ModelConfig desk = desk_preset();
    CHECK(desk.image.input_size == 64);
    CHECK(desk.image.embed_dim == 128);
    CHECK(desk.text.out_dim == 128);
    CHECK(desk.fusion.embed_dim == 128);
    CHECK(desk.epochs == 20);
    CHECK(desk.grad_clip == 1.0);

    // Presets defer vocab_size to the fitted vocabulary; the deferred zero
    // validates clean, a concrete size must cover the reserved ids.
    for (ModelConfig cfg : {paper, desk}) {
        CHECK(cfg.text.vocab_size == 0);
        CHECK_NOTHROW(cfg.validate());
        cfg.text.vocab_size = 100;
        CHECK_NOTHROW(cfg.validate());
        cfg.text.vocab_size = 4;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
}

TEST_CASE("model config validation catches width mismatches") {
    ModelConfig cfg = tiny_model_cfg();
    cfg.text.vocab_size = 50;
    CHECK_NOTHROW(cfg.validate());
    cfg.fusion.embed_dim = 24;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_model_cfg();
    cfg.text.vocab_size = 50;
    cfg.text.out_dim = 24;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_model_cfg();
    cfg.text.vocab_size = 50;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_model_cfg();
    cfg.text.vocab_size = 50;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("model config json round trip") {
    ModelConfig cfg = tiny_model_cfg();
    cfg.text.vocab_size = 64;
    cfg.loss = LossKind::Mae;
    cfg.target_scale = TargetScale::MinMax;
    cfg.text_backbone = TextBackbone::SimpleRecurrent;
    cfg.seed = 987654321;

    const std::string j = cfg.to_json_string(2);
    ModelConfig back = ModelConfig::from_json_string(j);
    CHECK(back.to_json_string(2) == j);
    CHECK(back.image.stage_channels == cfg.image.stage_channels);
    CHECK(back.loss == LossKind::Mae);
    CHECK(back.target_scale == TargetScale::MinMax);
    CHECK(back.text_backbone == TextBackbone::SimpleRecurrent);
    CHECK(back.seed == 987654321);
    CHECK(back.learning_rate == cfg.learning_rate);
}

TEST_CASE("model config json rejects unknown and missing keys at every level") {
    const std::string base = tiny_model_cfg().to_json_string();

    auto mutate = [&](const std::function<void(nlohmann::json&)>& fn) {
        nlohmann::json j = nlohmann::json::parse(base);
        fn(j);
        return j.dump();
    };

    CHECK_NOTHROW(ModelConfig::from_json_string(base));
    CHECK_THROWS_AS(ModelConfig::from_json_string(mutate([](auto& j) { j["extra"] = 1; })),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::from_json_string(mutate([](auto& j) { j.erase("epochs"); })),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::from_json_string(mutate([](auto& j) { j["image"]["padding"] = 1; })),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::from_json_string(mutate([](auto& j) { j["image"].erase("embed_dim"); })),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::from_json_string(mutate([](auto& j) { j["text"]["dropout"] = 0.5; })),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::from_json_string(mutate([](auto& j) { j["fusion"].erase("activation"); })),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::from_json_string(mutate([](auto& j) {
                        j["image"]["stage_channels"] = std::vector<int>{1, 2};
                    })),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::from_json_string("[]"), std::invalid_argument);
}

TEST_CASE("rating model: construction, prediction, determinism") {
    Vocabulary vocab = tiny_vocab();
    RatingModel model(tiny_model_cfg(), vocab);
    CHECK(model.config().text.vocab_size == vocab.size());  // 0 defers to the vocabulary

    std::mt19937_64 rng(31);
    Tensor img = random_tensor(rng, {3, 32, 32}, false, -1.0, 1.0);
    ScreenSample s;
    s.caption = "clean login screen";
    s.category = "tools";
    const TokenRow row = model.tokenize_sample(s);
    CHECK(row.ids.size() == 6);

    Tensor p1 = model.predict(img, row, false);
    REQUIRE(p1.shape() == (Shape{1}));
    Tensor p2 = model.predict(img, row, false);
    CHECK(p1.item() == p2.item());

    // Train mode consumes the dropout stream; eval afterwards is unchanged.
    Tensor t1 = model.predict(img, row, true);
    Tensor t2 = model.predict(img, row, true);
    CHECK(t1.item() != t2.item());
    CHECK(model.predict(img, row, false).item() == p1.item());

    // Same seed, fresh model: identical weights and identical train draws.
    RatingModel twin(tiny_model_cfg(), vocab);
    CHECK(twin.predict(img, row, true).item() == t1.item());
    CHECK(twin.predict(img, row, true).item() == t2.item());

    const double raw = model.predict_rating(img, row);
    CHECK(raw == target_to_raw(p1.item(), model.config().target_scale));
}

TEST_CASE("rating model: parameter namespace is disjoint and complete") {
    Vocabulary vocab = tiny_vocab();
    RatingModel model(tiny_model_cfg(), vocab);
    NamedParams params = model.parameters();
    std::set<std::string> names;
    bool image_seen = false, text_seen = false, fusion_seen = false;
    for (const auto& [name, p] : params) {
        CHECK(names.insert(name).second);
        CHECK(p.requires_grad());
        image_seen |= name.rfind("image.", 0) == 0;
        text_seen |= name.rfind("text.", 0) == 0;
        fusion_seen |= name.rfind("fusion.", 0) == 0;
    }
    CHECK(image_seen);
    CHECK(text_seen);
    CHECK(fusion_seen);
    CHECK(params.size() == 38 + 22 + 4);  // image + 1-layer text + fusion head

    // The recurrent backbone swaps the text parameter block.
    ModelConfig cfg = tiny_model_cfg();
    cfg.text_backbone = TextBackbone::SimpleRecurrent;
    RatingModel rnn_model(cfg, vocab);
    NamedParams rnn_params = rnn_model.parameters();
    CHECK(rnn_params.size() == 38 + 8 + 4);

    // An explicit vocab_size below the fitted vocabulary is rejected.
    ModelConfig bad = tiny_model_cfg();
    bad.text.vocab_size = 5;
    CHECK_THROWS_AS(RatingModel(bad, vocab), std::invalid_argument);
}

TEST_CASE("rating model: gradient through the fused prediction") {
    Vocabulary vocab = tiny_vocab();
    ModelConfig cfg = tiny_model_cfg();
    cfg.fusion.dropout = 0.0;
    cfg.image.block_activation = ActivationKind::Swish;
    RatingModel model(cfg, vocab);

    std::mt19937_64 rng(37);
    Tensor img = random_tensor(rng, {3, 32, 32}, false, -1.0, 1.0);
    ScreenSample s;
    s.caption = "clean layout";
    s.category = "shopping";
    const TokenRow row = model.tokenize_sample(s);

    NamedParams params = model.parameters();
    auto f = [&]() { return model.predict(img, row, false); };
    for (const char* name : {"fusion.w1", "fusion.b2", "image.stem.dw_w", "text.proj_w"}) {
        Tensor p = param_of(params, name);
        CHECK(grad_check_param(f, p) < 1e-3);
    }
}
