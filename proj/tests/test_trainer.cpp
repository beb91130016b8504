#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include <nlohmann/json.hpp>

#include "uirate/ablation.hpp"
#include "uirate/checkpoint.hpp"
#include "uirate/image_io.hpp"
#include "uirate/ops.hpp"
#include "uirate/synthetic.hpp"
#include "uirate/trainer.hpp"

#include "test_helpers.hpp"

using namespace uirate;
using testutil::TempDir;

namespace {

// Re-derived textbook update: biased moments, explicit bias correction.
void reference_adam(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v, std::uint64_t t, const AdamParams& hp) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        const double mhat = m[i] / (1.0 - std::pow(hp.beta1, static_cast<double>(t)));
        const double vhat = v[i] / (1.0 - std::pow(hp.beta2, static_cast<double>(t)));
        w[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

ModelConfig tiny_cfg(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.image = {32, 4, {6, 8, 10}, 16, ActivationKind::HSwish, 2};
    cfg.text = {0, 16, 1, 4, 6, 16};
    cfg.fusion = {16, 12, ActivationKind::Swish, 0.1};
    cfg.learning_rate = 1e-3;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = seed;
    return cfg;
}

// Ten zero-noise synthetic screens shared by every training test in this
// binary; the scratch directory lives until process exit.
struct TrainFixture {
    TempDir dir{"trainer_fixture"};
    Manifest manifest;
    std::vector<std::size_t> train_idx{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<std::size_t> val_idx{8, 9};
    Vocabulary vocab;

    TrainFixture() {
        SyntheticOptions o;
        o.n = 10;
        o.seed = 2024;
        o.image_size = 24;
        o.noise = 0.0;
        o.dir = dir.str();
        manifest = generate_synthetic(o);
        std::vector<std::string> texts;
        for (const auto& s : manifest.samples) texts.push_back(sample_text(s));
        vocab = Vocabulary::build(texts);
    }
};

const TrainFixture& fixture() {
    static TrainFixture fx;
    return fx;
}

Tensor param_of(const NamedParams& params, const std::string& name) {
    auto it = std::find_if(params.begin(), params.end(), [&](const auto& kv) { return kv.first == name; });
    REQUIRE(it != params.end());
    return it->second;
}

template <typename E, typename Fn>
std::string error_text(Fn&& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    return "<no exception>";
}

bool same_report(const MetricsReport& a, const MetricsReport& b) {
    return a.n == b.n && a.mae == b.mae && a.mse == b.mse && a.rmse == b.rmse && a.r2 == b.r2 &&
           a.pearson_r == b.pearson_r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spew(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

// Checkpoint container layout: 4-byte magic, u32 version, u64 header length,
// JSON header, raw blob.
std::string ck_header(const std::string& raw) {
    std::uint64_t len = 0;
    std::memcpy(&len, raw.data() + 8, sizeof(len));
    return raw.substr(16, static_cast<std::size_t>(len));
}

std::string ck_blob(const std::string& raw) {
    std::uint64_t len = 0;
    std::memcpy(&len, raw.data() + 8, sizeof(len));
    return raw.substr(16 + static_cast<std::size_t>(len));
}

std::string ck_join(const std::string& header, const std::string& blob) {
    std::string out = "URCP";
    const std::uint32_t version = Checkpoint::kVersion;
    out.append(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t len = header.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof(len));
    out += header;
    out += blob;
    return out;
}

}  // namespace

TEST_CASE("adam_step: first step with fresh moments moves by about lr") {
    // With zeroed moments the bias corrections cancel: mhat = g, vhat = g^2,
    // so the update is lr * g / (|g| + eps). [DERIVED]
    AdamParams hp;
    hp.lr = 0.1;
    std::vector<double> w{0.0, 2.0};
    AdamSlot slot;
    adam_step(w, {1.0, -0.5}, slot, 1, hp);
    CHECK(w[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(2.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
    CHECK(slot.m[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(slot.v[0] == doctest::Approx(0.001).epsilon(1e-9));
}

TEST_CASE("adam_step: five steps match the textbook update rule") {
    std::mt19937_64 rng(31);
    AdamParams hp;
    hp.lr = 0.05;
    std::vector<double> w = testutil::random_vector(rng, 6);
    std::vector<double> ref = w;
    std::vector<double> rm(6, 0.0), rv(6, 0.0);
    AdamSlot slot;
    for (std::uint64_t t = 1; t <= 5; ++t) {
        const std::vector<double> g = testutil::random_vector(rng, 6);
        adam_step(w, g, slot, t, hp);
        reference_adam(ref, g, rm, rv, t, hp);
        for (std::size_t i = 0; i < w.size(); ++i) {
            CHECK(w[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("adam_step: input validation") {
    AdamParams hp;
    std::vector<double> w{1.0, 2.0};
    AdamSlot slot;
    CHECK_THROWS_AS(adam_step(w, {1.0}, slot, 1, hp), std::invalid_argument);
    CHECK_THROWS_AS(adam_step(w, {1.0, 1.0}, slot, 0, hp), std::invalid_argument);
    AdamSlot stale;
    stale.m = {0.0};
    stale.v = {0.0};
    CHECK_THROWS_AS(adam_step(w, {1.0, 1.0}, stale, 1, hp), std::invalid_argument);
}

TEST_CASE("Adam: step consumes gradients, clears them, and decays moments") {
    Tensor a = Tensor::from_vector({1}, {1.0}, true);
    Tensor b = Tensor::from_vector({1}, {4.0}, true);
    AdamParams hp;
    hp.lr = 0.01;
    Adam opt({{"a", a}, {"b", b}}, hp);

    sum_all(mul(a, a)).backward();  // grad on a is 2a = 2
    REQUIRE(a.has_grad());
    opt.step();
    CHECK(opt.step_count() == 1);
    CHECK(a.values()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(b.values()[0] == 4.0);  // zero gradient on zero moments: no movement
    CHECK_FALSE(a.has_grad());    // the step ends with zero_grad

    // No fresh gradients: the first moment has decayed but is still nonzero,
    // so the updated weight keeps drifting while the untouched one stays put.
    const double after_one = a.values()[0];
    opt.step();
    CHECK(opt.step_count() == 2);
    CHECK(a.values()[0] != after_one);
    CHECK(b.values()[0] == 4.0);
}

TEST_CASE("Adam: zero learning rate freezes the weights") {
    Tensor a = Tensor::from_vector({2}, {1.0, -2.0}, true);
    AdamParams hp;
    hp.lr = 0.0;
    Adam opt({{"a", a}}, hp);
    sum_all(mul(a, a)).backward();
    opt.step();
    CHECK(a.values() == std::vector<double>{1.0, -2.0});
}

TEST_CASE("clip_gradients: 3-4-5 example") {
    // sum(p * c) puts exactly c into p's gradient. [DERIVED]
    Tensor p = Tensor::from_vector({2}, {0.0, 0.0}, true);
    Tensor c = Tensor::from_vector({2}, {3.0, 4.0});
    sum_all(mul(p, c)).backward();
    NamedParams params{{"p", p}};

    SUBCASE("above the threshold the norm is scaled down to max_norm") {
        const double pre = clip_gradients(params, 1.0);
        CHECK(pre == 5.0);
        CHECK(p.grad()[0] == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(p.grad()[1] == doctest::Approx(0.8).epsilon(1e-12));
        CHECK(std::hypot(p.grad()[0], p.grad()[1]) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("below the threshold gradients pass through untouched") {
        const double pre = clip_gradients(params, 10.0);
        CHECK(pre == 5.0);
        CHECK(p.grad() == std::vector<double>{3.0, 4.0});
    }
}

TEST_CASE("clip_gradients: norm spans parameters and skips missing grads") {
    Tensor p = Tensor::from_vector({1}, {0.0}, true);
    Tensor q = Tensor::from_vector({1}, {0.0}, true);
    Tensor idle = Tensor::from_vector({3}, {1.0, 1.0, 1.0}, true);
    sum_all(add(mul(p, Tensor::scalar(3.0)), mul(q, Tensor::scalar(4.0)))).backward();
    NamedParams params{{"p", p}, {"q", q}, {"idle", idle}};
    CHECK_FALSE(idle.has_grad());

    const double pre = clip_gradients(params, 0.5);
    CHECK(pre == 5.0);
    CHECK(p.grad()[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(q.grad()[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK_FALSE(idle.has_grad());

    CHECK_THROWS_AS(clip_gradients(params, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(clip_gradients(params, -1.0), std::invalid_argument);
}

TEST_CASE("clip_gradients: no gradients anywhere means zero norm") {
    Tensor p = Tensor::from_vector({2}, {1.0, 2.0}, true);
    CHECK(clip_gradients({{"p", p}}, 1.0) == 0.0);
}

TEST_CASE("shuffle_seed_of: fixed xor tweak") {
    CHECK(shuffle_seed_of(0) == 0xD1B54A32D192ED03ull);
    CHECK(shuffle_seed_of(0xD1B54A32D192ED03ull) == 0);
    CHECK(shuffle_seed_of(42) != 42);
}

TEST_CASE("train_model: identical seeds reproduce the run bit for bit") {
    const TrainFixture& fx = fixture();
    const ModelConfig cfg = tiny_cfg(123);
    TrainOptions opts;
    opts.train_idx = fx.train_idx;
    opts.val_idx = fx.val_idx;

    RatingModel m1(cfg, fx.vocab);
    TrainResult r1 = train_model(m1, fx.manifest, opts);
    RatingModel m2(cfg, fx.vocab);
    TrainResult r2 = train_model(m2, fx.manifest, opts);

    REQUIRE(r1.history.size() == 2);  // cfg.epochs
    REQUIRE(r2.history.size() == 2);
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].epoch == r2.history[i].epoch);
        CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
        CHECK(same_report(r1.history[i].train, r2.history[i].train));
        REQUIRE(r1.history[i].has_val);
        CHECK(same_report(r1.history[i].val, r2.history[i].val));
    }
    CHECK(r1.best_epoch == r2.best_epoch);
    CHECK(r1.best_mae == r2.best_mae);

    const NamedParams p1 = m1.parameters(), p2 = m2.parameters();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].second.values() == p2[i].second.values());
    }

    // The convenience overload is exactly Adam at cfg.learning_rate plus the
    // derived shuffle stream.
    RatingModel m3(cfg, fx.vocab);
    AdamParams hp;
    hp.lr = cfg.learning_rate;
    Adam adam(m3.parameters(), hp);
    std::mt19937_64 srng(shuffle_seed_of(cfg.seed));
    TrainResult r3 = train_model(m3, adam, fx.manifest, opts, srng);
    CHECK(r3.history[0].train_loss == r1.history[0].train_loss);
    CHECK(r3.history[1].train_loss == r1.history[1].train_loss);
    CHECK(same_report(r3.history[1].val, r1.history[1].val));
}

TEST_CASE("train_model: different seeds land on different trajectories") {
    const TrainFixture& fx = fixture();
    TrainOptions opts;
    opts.train_idx = fx.train_idx;
    opts.epochs_override = 1;

    RatingModel m1(tiny_cfg(123), fx.vocab);
    RatingModel m2(tiny_cfg(321), fx.vocab);
    TrainResult r1 = train_model(m1, fx.manifest, opts);
    TrainResult r2 = train_model(m2, fx.manifest, opts);
    CHECK(r1.history[0].train_loss != r2.history[0].train_loss);
}

TEST_CASE("train_model: split validation") {
    const TrainFixture& fx = fixture();
    RatingModel model(tiny_cfg(1), fx.vocab);
    TrainOptions empty;
    CHECK_THROWS_AS(train_model(model, fx.manifest, empty), std::invalid_argument);

    TrainOptions oob;
    oob.train_idx = {0, 99};
    CHECK_THROWS_AS(train_model(model, fx.manifest, oob), std::invalid_argument);
}

TEST_CASE("train_model: loss falls on the zero-noise synthetic set") {
    const TrainFixture& fx = fixture();
    TrainOptions opts;
    opts.train_idx = fx.train_idx;
    opts.val_idx = fx.val_idx;
    opts.epochs_override = 6;

    RatingModel model(tiny_cfg(5), fx.vocab);
    TrainResult res = train_model(model, fx.manifest, opts);
    REQUIRE(res.history.size() == 6);
    CHECK(res.history.front().train_loss > 0.0);
    CHECK(res.history.back().train.mse < res.history.front().train.mse);
    for (const auto& rec : res.history) CHECK(rec.train.n == fx.train_idx.size());
}

TEST_CASE("train_model: the model ends on the best validation epoch") {
    const TrainFixture& fx = fixture();
    TrainOptions opts;
    opts.train_idx = fx.train_idx;
    opts.val_idx = fx.val_idx;
    opts.epochs_override = 4;

    RatingModel model(tiny_cfg(29), fx.vocab);
    TrainResult res = train_model(model, fx.manifest, opts);

    CHECK_FALSE(res.val_missing);
    REQUIRE(res.best_epoch >= 1);
    REQUIRE(res.best_epoch <= 4);
    double min_mae = res.history[0].val.mae;
    for (const auto& rec : res.history) min_mae = std::min(min_mae, rec.val.mae);
    CHECK(res.best_mae == min_mae);
    const auto& best = res.history[static_cast<std::size_t>(res.best_epoch - 1)];
    CHECK(res.best_mae == best.val.mae);

    // Weights were rolled back to that epoch, so a fresh evaluation
    // reproduces the recorded validation numbers exactly.
    MetricsReport again = evaluate_model(model, fx.manifest, fx.val_idx);
    CHECK(again.mae == res.best_mae);
    CHECK(same_report(again, best.val));
}

TEST_CASE("train_model: without a validation split the train MAE drives best-epoch") {
    const TrainFixture& fx = fixture();
    TrainOptions opts;
    opts.train_idx = fx.train_idx;
    opts.epochs_override = 3;

    RatingModel model(tiny_cfg(31), fx.vocab);
    TrainResult res = train_model(model, fx.manifest, opts);
    CHECK(res.val_missing);
    for (const auto& rec : res.history) CHECK_FALSE(rec.has_val);
    double min_mae = res.history[0].train.mae;
    for (const auto& rec : res.history) min_mae = std::min(min_mae, rec.train.mae);
    CHECK(res.best_mae == min_mae);
    MetricsReport again = evaluate_model(model, fx.manifest, fx.train_idx);
    CHECK(again.mae == res.best_mae);
}

TEST_CASE("train_model: epoch hooks and early stop") {
    const TrainFixture& fx = fixture();
    ModelConfig cfg = tiny_cfg(53);
    cfg.epochs = 1;

    SUBCASE("epochs_override replaces the configured count") {
        RatingModel model(cfg, fx.vocab);
        TrainOptions opts;
        opts.train_idx = fx.train_idx;
        opts.epochs_override = 3;
        CHECK(train_model(model, fx.manifest, opts).history.size() == 3);
    }
    SUBCASE("cfg.epochs rules when no override is given") {
        RatingModel model(cfg, fx.vocab);
        TrainOptions opts;
        opts.train_idx = fx.train_idx;
        CHECK(train_model(model, fx.manifest, opts).history.size() == 1);
    }
    SUBCASE("stop_when ends the loop after the flagged epoch") {
        RatingModel model(cfg, fx.vocab);
        std::vector<int> seen;
        TrainOptions opts;
        opts.train_idx = fx.train_idx;
        opts.epochs_override = 10;
        opts.on_epoch = [&](const EpochRecord& rec) { seen.push_back(rec.epoch); };
        opts.stop_when = [](const EpochRecord& rec) { return rec.epoch >= 2; };
        TrainResult res = train_model(model, fx.manifest, opts);
        CHECK(res.history.size() == 2);
        CHECK(seen == std::vector<int>{1, 2});
    }
}

TEST_CASE("train_model: non-finite loss reports epoch and batch") {
    const TrainFixture& fx = fixture();
    RatingModel model(tiny_cfg(3), fx.vocab);
    // An absurd output bias overflows the squared error to infinity in the
    // very first batch.
    param_of(model.parameters(), "fusion.b2").values()[0] = 1e308;
    TrainOptions opts;
    opts.train_idx = fx.train_idx;
    const std::string msg =
        error_text<std::runtime_error>([&] { train_model(model, fx.manifest, opts); });
    CHECK(msg.find("non-finite loss at epoch 1") != std::string::npos);
    CHECK(msg.find("batch starting at sample 0") != std::string::npos);
}

TEST_CASE("write_history_csv: layout, blank val loss, undefined markers") {
    TempDir dir("history");
    EpochRecord e1;
    e1.epoch = 1;
    e1.train_loss = 0.25;
    e1.train.n = 4;
    e1.train.mae = 0.5;
    e1.train.mse = 0.25;
    e1.train.rmse = 0.5;
    e1.train.r2 = 0.8;
    e1.train.pearson_r = 0.9;
    e1.has_val = true;
    e1.val.n = 2;
    e1.val.mae = 1.5;
    e1.val.mse = 2.25;
    e1.val.rmse = 1.5;  // r2 and pearson_r stay undefined
    EpochRecord e2;
    e2.epoch = 2;
    e2.train_loss = 0.125;
    e2.train = e1.train;

    const std::string path = dir.str("history.csv");
    write_history_csv(path, {e1, e2});

    std::ifstream in(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "epoch,split,loss,mae,mse,rmse,r2,pearson_r");
    CHECK(lines[1] == "1,train,0.25,0.5,0.25,0.5,0.8,0.9");
    CHECK(lines[2] == "1,val,,1.5,2.25,1.5,undefined,undefined");
    CHECK(lines[3] == "2,train,0.125,0.5,0.25,0.5,0.8,0.9");
}

TEST_CASE("evaluate_model: matches per-sample predict_rating scoring") {
    const TrainFixture& fx = fixture();
    RatingModel model(tiny_cfg(17), fx.vocab);
    std::vector<double> y, yhat;
    for (std::size_t i : fx.val_idx) {
        const auto& s = fx.manifest.samples[i];
        Tensor img = preprocess_image_file(s.image_path, model.config().image.input_size);
        y.push_back(s.avg_rating);
        yhat.push_back(model.predict_rating(img, model.tokenize_sample(s)));
    }
    MetricsReport direct = evaluate(y, yhat);
    MetricsReport via_eval = evaluate_model(model, fx.manifest, fx.val_idx);
    CHECK(same_report(direct, via_eval));
}

TEST_CASE("evaluate_model: clamping and minimum sample count") {
    const TrainFixture& fx = fixture();
    RatingModel model(tiny_cfg(9), fx.vocab);
    CHECK_THROWS_AS(evaluate_model(model, fx.manifest, {0}), std::invalid_argument);

    // Push every prediction far above the scale; clamping turns the model
    // into the constant-5 predictor, which has a closed-form score.
    param_of(model.parameters(), "fusion.b2").values()[0] = 1000.0;
    MetricsReport wild = evaluate_model(model, fx.manifest, fx.val_idx, false);
    CHECK_FALSE(wild.clamped);
    CHECK(wild.mae > 100.0);

    MetricsReport capped = evaluate_model(model, fx.manifest, fx.val_idx, true);
    CHECK(capped.clamped);
    std::vector<double> y, fives;
    for (std::size_t i : fx.val_idx) {
        y.push_back(fx.manifest.samples[i].avg_rating);
        fives.push_back(5.0);
    }
    MetricsReport oracle = evaluate(y, fives);
    CHECK(capped.mae == oracle.mae);
    CHECK(capped.mse == oracle.mse);
}

TEST_CASE("checkpoint: save/load round trip preserves model, optimizer, history") {
    const TrainFixture& fx = fixture();
    TempDir dir("ckpt");
    const ModelConfig cfg = tiny_cfg(99);

    RatingModel model(cfg, fx.vocab);
    AdamParams hp;
    hp.lr = cfg.learning_rate;
    Adam adam(model.parameters(), hp);
    std::mt19937_64 srng(shuffle_seed_of(cfg.seed));
    TrainOptions opts;
    opts.train_idx = fx.train_idx;
    opts.val_idx = fx.val_idx;
    TrainResult res = train_model(model, adam, fx.manifest, opts, srng);

    Checkpoint ck = make_checkpoint(model, adam, res);
    const std::string path = dir.str("model.urcp");
    save_checkpoint(ck, path);
    Checkpoint lk = load_checkpoint(path);

    CHECK(lk.best_epoch == res.best_epoch);
    CHECK(lk.best_mae == res.best_mae);
    CHECK_FALSE(lk.val_missing);
    CHECK(lk.has_optimizer);
    CHECK(lk.adam_t == adam.step_count());
    CHECK(lk.vocab_tokens == model.vocab().id_to_token);
    CHECK(lk.config.to_json_string() == model.config().to_json_string());
    REQUIRE(lk.history.size() == res.history.size());
    for (std::size_t i = 0; i < lk.history.size(); ++i) {
        CHECK(lk.history[i].epoch == res.history[i].epoch);
        CHECK(lk.history[i].train_loss == res.history[i].train_loss);
        CHECK(same_report(lk.history[i].train, res.history[i].train));
        REQUIRE(lk.history[i].has_val == res.history[i].has_val);
        if (lk.history[i].has_val) CHECK(same_report(lk.history[i].val, res.history[i].val));
    }

    const NamedParams live = model.parameters();
    REQUIRE(lk.tensors.size() == live.size());
    REQUIRE(lk.slots.size() == adam.slots().size());
    for (std::size_t i = 0; i < live.size(); ++i) {
        CHECK(lk.tensors[i].first == live[i].first);
        CHECK(lk.tensors[i].second.values() == live[i].second.values());
        CHECK(lk.slots[i].m == adam.slots()[i].m);
        CHECK(lk.slots[i].v == adam.slots()[i].v);
    }

    RatingModel twin = model_from_checkpoint(lk);
    MetricsReport a = evaluate_model(model, fx.manifest, fx.val_idx);
    MetricsReport b = evaluate_model(twin, fx.manifest, fx.val_idx);
    CHECK(same_report(a, b));

    // The dropout stream state travels with the checkpoint: the next
    // train-mode draws coincide bit for bit.
    Tensor img = preprocess_image_file(fx.manifest.samples[0].image_path, cfg.image.input_size);
    TokenRow row = model.tokenize_sample(fx.manifest.samples[0]);
    for (int k = 0; k < 3; ++k) {
        CHECK(model.predict(img, row, true).item() == twin.predict(img, row, true).item());
    }

    // Resuming from the checkpoint matches continuing the live run.
    Adam resumed = optimizer_from_checkpoint(lk, twin);
    CHECK(resumed.step_count() == adam.step_count());
    TrainOptions more;
    more.train_idx = fx.train_idx;
    more.val_idx = fx.val_idx;
    more.epochs_override = 1;
    std::mt19937_64 ra(414), rb(414);
    TrainResult ca = train_model(model, adam, fx.manifest, more, ra);
    TrainResult cb = train_model(twin, resumed, fx.manifest, more, rb);
    CHECK(ca.history[0].train_loss == cb.history[0].train_loss);
    CHECK(same_report(ca.history[0].val, cb.history[0].val));
}

TEST_CASE("checkpoint: model-only capture has no optimizer payload") {
    const TrainFixture& fx = fixture();
    TempDir dir("ckpt_bare");
    RatingModel model(tiny_cfg(7), fx.vocab);
    Checkpoint ck = make_checkpoint(model);
    CHECK_FALSE(ck.has_optimizer);
    CHECK(ck.adam_t == 0);
    CHECK(ck.best_epoch == -1);

    const std::string path = dir.str("bare.urcp");
    save_checkpoint(ck, path);
    Checkpoint lk = load_checkpoint(path);
    CHECK_FALSE(lk.has_optimizer);
    CHECK(lk.slots.empty());
    CHECK(lk.history.empty());

    RatingModel twin = model_from_checkpoint(lk);
    MetricsReport a = evaluate_model(model, fx.manifest, fx.val_idx);
    MetricsReport b = evaluate_model(twin, fx.manifest, fx.val_idx);
    CHECK(same_report(a, b));

    CHECK_THROWS_AS(optimizer_from_checkpoint(lk, twin), std::runtime_error);
}

TEST_CASE("checkpoint: malformed files are rejected") {
    const TrainFixture& fx = fixture();
    TempDir dir("ckpt_bad");
    RatingModel model(tiny_cfg(7), fx.vocab);
    const std::string base = dir.str("base.urcp");
    save_checkpoint(make_checkpoint(model), base);
    const std::string raw = slurp(base);
    const std::string header = ck_header(raw);
    const std::string blob = ck_blob(raw);
    const std::string bad = dir.str("bad.urcp");

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir.str("nope.urcp")), std::runtime_error);
    }
    SUBCASE("not a checkpoint") {
        spew(bad, "just text");
        CHECK(error_text<std::runtime_error>([&] { load_checkpoint(bad); }).find("not a checkpoint") !=
              std::string::npos);
    }
    SUBCASE("magic byte flipped") {
        std::string r = raw;
        r[0] = 'X';
        spew(bad, r);
        CHECK(error_text<std::runtime_error>([&] { load_checkpoint(bad); }).find("not a checkpoint") !=
              std::string::npos);
    }
    SUBCASE("unsupported version") {
        std::string r = raw;
        const std::uint32_t v2 = 2;
        std::memcpy(r.data() + 4, &v2, sizeof(v2));
        spew(bad, r);
        CHECK(error_text<std::runtime_error>([&] { load_checkpoint(bad); })
                  .find("unsupported checkpoint version 2") != std::string::npos);
    }
    SUBCASE("header length overruns the file") {
        std::string r = raw;
        const std::uint64_t huge = raw.size();
        std::memcpy(r.data() + 8, &huge, sizeof(huge));
        spew(bad, r);
        CHECK(error_text<std::runtime_error>([&] { load_checkpoint(bad); }).find("header overruns") !=
              std::string::npos);
    }
    SUBCASE("unknown header key") {
        nlohmann::json h = nlohmann::json::parse(header);
        h["extra"] = 1;
        spew(bad, ck_join(h.dump(), blob));
        CHECK(error_text<std::runtime_error>([&] { load_checkpoint(bad); }).find("unknown key 'extra'") !=
              std::string::npos);
    }
    SUBCASE("missing header key") {
        nlohmann::json h = nlohmann::json::parse(header);
        h.erase("vocab");
        spew(bad, ck_join(h.dump(), blob));
        CHECK(error_text<std::runtime_error>([&] { load_checkpoint(bad); }).find("missing key 'vocab'") !=
              std::string::npos);
    }
    SUBCASE("blob size mismatch") {
        spew(bad, ck_join(header, blob.substr(0, blob.size() - 8)));
        CHECK(error_text<std::runtime_error>([&] { load_checkpoint(bad); }).find("blob size mismatch") !=
              std::string::npos);
    }
}

TEST_CASE("apply_checkpoint: architecture drift is caught") {
    const TrainFixture& fx = fixture();
    RatingModel model(tiny_cfg(7), fx.vocab);
    Checkpoint ck = make_checkpoint(model);

    ModelConfig deeper = tiny_cfg(7);
    deeper.text.layers = 2;
    RatingModel other(deeper, fx.vocab);
    CHECK(error_text<std::runtime_error>([&] { apply_checkpoint(ck, other); }).find("parameters") !=
          std::string::npos);

    RatingModel same(tiny_cfg(7), fx.vocab);
    Checkpoint renamed = ck;
    renamed.tensors[0].first = "bogus";
    CHECK(error_text<std::runtime_error>([&] { apply_checkpoint(renamed, same); }).find("name mismatch") !=
          std::string::npos);

    Checkpoint resized = ck;
    resized.tensors[0].second = Tensor::zeros({3});
    CHECK(error_text<std::runtime_error>([&] { apply_checkpoint(resized, same); }).find("size mismatch") !=
          std::string::npos);
}

TEST_CASE("validate_spec: closed axes and mandatory reasons") {
    AblationSpec ok;
    ok.name = "baseline";
    CHECK_NOTHROW(validate_spec(ok));

    AblationSpec anon;
    CHECK_THROWS_AS(validate_spec(anon), std::invalid_argument);

    AblationSpec act = ok;
    act.activation = "sigmoid";
    CHECK(error_text<std::invalid_argument>([&] { validate_spec(act); }).find("outside the study set") !=
          std::string::npos);

    AblationSpec gibberish = ok;
    gibberish.activation = "relu6ish";
    CHECK(error_text<std::invalid_argument>([&] { validate_spec(gibberish); }).find("unknown activation") !=
          std::string::npos);

    AblationSpec img = ok;
    img.image_init = "imagenet";
    CHECK(error_text<std::invalid_argument>([&] { validate_spec(img); }).find("no pretrained weights") !=
          std::string::npos);

    AblationSpec txt = ok;
    txt.text_init = "bert";
    CHECK(error_text<std::invalid_argument>([&] { validate_spec(txt); }).find("no pretrained weights") !=
          std::string::npos);

    AblationSpec enc = ok;
    enc.text_encoder = "dbn";
    CHECK(error_text<std::invalid_argument>([&] { validate_spec(enc); }).find("unknown text encoder") !=
          std::string::npos);

    AblationSpec off;
    off.name = "dropped";
    off.supported = false;
    CHECK(error_text<std::invalid_argument>([&] { validate_spec(off); }).find("reason") !=
          std::string::npos);
    off.unsupported_reason = "out of scope";
    off.activation = "whatever";  // axis checks are skipped for unsupported rows
    CHECK_NOTHROW(validate_spec(off));
}

TEST_CASE("activation_suite: the four studied activations in table order") {
    const auto suite = activation_suite();
    REQUIRE(suite.size() == 4);
    const std::vector<std::string> names{"Swish", "Mish", "GoLU", "GELU"};
    for (std::size_t i = 0; i < suite.size(); ++i) {
        CHECK(suite[i].name == names[i]);
        CHECK(suite[i].activation == names[i]);
        CHECK(suite[i].supported);
        CHECK_NOTHROW(validate_spec(suite[i]));
    }
}

TEST_CASE("table2_suite: variant labels, order, and support flags") {
    const auto suite = table2_suite();
    REQUIRE(suite.size() == 10);
    const std::vector<std::string> names{
        "Without image pretrained",
        "Without text pretrained",
        "No activation function after fusion",
        "Text vector using LSTM",
        "Text vector using DBN",
        "Image embedding using ResNET50",
        "Image embedding using EFFICIENTNET B3",
        "Image embedding using DENSENET121",
        "Image embedding using CONVNEXT_TINY",
        "Image embedding using INCEPTION_V3",
    };
    for (std::size_t i = 0; i < suite.size(); ++i) {
        CHECK(suite[i].name == names[i]);
        CHECK(suite[i].supported == (i < 4));
        CHECK_NOTHROW(validate_spec(suite[i]));
    }
    CHECK(suite[2].activation == "identity");
    CHECK(suite[3].text_encoder == "simple-recurrent");
    CHECK(suite[4].unsupported_reason.find("deep belief") != std::string::npos);
    CHECK(suite[5].unsupported_reason == suite[9].unsupported_reason);
}

TEST_CASE("run_ablation: the whole suite is validated before any training") {
    const TrainFixture& fx = fixture();
    ModelConfig base = tiny_cfg(11);
    AblationSpec good;
    good.name = "baseline";
    AblationSpec bad;
    bad.name = "late bad row";
    bad.activation = "hswish";

    int rows_seen = 0;
    AblationRunOptions opts;
    opts.epochs_override = 1;
    opts.on_row = [&](const AblationRow&) { ++rows_seen; };
    CHECK_THROWS_AS(run_ablation({good, bad}, fx.manifest, base, opts), std::invalid_argument);
    CHECK(rows_seen == 0);

    CHECK_THROWS_AS(run_ablation({good}, Manifest{}, base), std::invalid_argument);
}

TEST_CASE("run_ablation: table schema, determinism, and renderings") {
    const TrainFixture& fx = fixture();
    Manifest data = fx.manifest;
    data.splits.assign(data.samples.size(), Split::Train);
    data.splits[6] = Split::Val;
    data.splits[7] = Split::Val;
    data.splits[8] = Split::Test;
    data.splits[9] = Split::Test;

    ModelConfig base = tiny_cfg(13);
    AblationRunOptions opts;
    opts.epochs_override = 1;
    std::vector<std::string> seen;
    opts.on_row = [&](const AblationRow& row) { seen.push_back(row.name); };

    const auto suite = table2_suite();
    AblationTable t1 = run_ablation(suite, data, base, opts);
    REQUIRE(t1.rows.size() == 10);
    CHECK(seen.size() == 10);
    for (std::size_t i = 0; i < t1.rows.size(); ++i) {
        CHECK(t1.rows[i].name == suite[i].name);
        CHECK(t1.rows[i].supported == suite[i].supported);
        if (suite[i].supported) {
            CHECK(t1.rows[i].eval_split == "test");
            CHECK(t1.rows[i].metrics.n == 2);
        } else {
            CHECK(t1.rows[i].eval_split.empty());
            CHECK_FALSE(t1.rows[i].unsupported_reason.empty());
        }
    }

    // The first two rows run the identical baseline config, so their scores
    // coincide; changing the fusion activation or the text encoder moves them.
    CHECK(t1.rows[0].metrics.mae == t1.rows[1].metrics.mae);
    CHECK(t1.rows[0].metrics.mae != t1.rows[2].metrics.mae);
    CHECK(t1.rows[0].metrics.mae != t1.rows[3].metrics.mae);

    AblationTable t2 = run_ablation(suite, data, base, {1, nullptr});
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(t1.rows[i].metrics.mae == t2.rows[i].metrics.mae);
        CHECK(t1.rows[i].metrics.mse == t2.rows[i].metrics.mse);
    }

    const std::string csv = t1.to_csv();
    CHECK(csv.rfind("name,status,mae,mse,rmse,r2,pearson_r,eval_split,detail\n", 0) == 0);
    CHECK(csv.find("Text vector using DBN,unsupported,,,,,,,"
                   "no deep belief network implementation in this repository\n") != std::string::npos);
    CHECK(csv.find(",ok,") != std::string::npos);

    const std::string text = t1.to_text();
    CHECK(text.rfind("Variant", 0) == 0);
    CHECK(text.find("Pearson-r") != std::string::npos);
    CHECK(text.find("unsupported: pretrained external CNN backbones are out of scope "
                    "for this from-scratch build") != std::string::npos);

    const nlohmann::json j = nlohmann::json::parse(t1.to_json());
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 10);
    CHECK(j[0].at("name") == "Without image pretrained");
    CHECK(j[0].at("supported") == true);
    CHECK(j[0].at("metrics").is_object());
    CHECK(j[0].at("metrics").contains("mae"));
    CHECK(j[0].at("eval_split") == "test");
    CHECK(j[4].at("metrics").is_null());
    CHECK(j[4].at("reason").is_string());
}
