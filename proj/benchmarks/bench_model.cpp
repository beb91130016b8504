// Microbenchmarks for the hot paths: convolution kernels (the cost-model
// claim), activations, both encoders, fusion, and a full training step.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "uirate/activations.hpp"
#include "uirate/conv.hpp"
#include "uirate/conv_cost.hpp"
#include "uirate/fusion.hpp"
#include "uirate/init.hpp"
#include "uirate/model.hpp"
#include "uirate/ops.hpp"
#include "uirate/rand.hpp"
#include "uirate/tensor.hpp"
#include "uirate/text_encoder.hpp"

namespace {

using namespace uirate;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false) {
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = unit_gaussian(rng);
    return Tensor::from_vector(std::move(shape), std::move(data), requires_grad);
}

// 28x28 map, 16 -> 32 channels, 3x3 kernel: the separable stack should land
// near the 1/n + 1/d_k^2 cost ratio of the standard kernel.
constexpr ConvShape kConvShape{28, 16, 32, 3};

void BM_StandardConv(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({kConvShape.m, kConvShape.d_f, kConvShape.d_f}, rng);
    const Tensor w = random_tensor({kConvShape.n, kConvShape.m, kConvShape.d_k, kConvShape.d_k}, rng);
    const Tensor b = random_tensor({kConvShape.n}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(x, w, b));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(standard_conv_cost(kConvShape)));
}
BENCHMARK(BM_StandardConv);

void BM_SeparableConv(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({kConvShape.m, kConvShape.d_f, kConvShape.d_f}, rng);
    const Tensor dw = random_tensor({kConvShape.m, kConvShape.d_k, kConvShape.d_k}, rng);
    const Tensor db = random_tensor({kConvShape.m}, rng);
    const Tensor pw = random_tensor({kConvShape.n, kConvShape.m}, rng);
    const Tensor pb = random_tensor({kConvShape.n}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(pointwise_conv2d(depthwise_conv2d(x, dw, db), pw, pb));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(separable_conv_cost(kConvShape)));
}
BENCHMARK(BM_SeparableConv);

void BM_Activation(benchmark::State& state, ActivationKind kind) {
    std::mt19937_64 rng(3);
    const Tensor x = random_tensor({4096}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(activate(x, kind));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 4096);
}
BENCHMARK_CAPTURE(BM_Activation, swish, ActivationKind::Swish);
BENCHMARK_CAPTURE(BM_Activation, mish, ActivationKind::Mish);
BENCHMARK_CAPTURE(BM_Activation, golu, ActivationKind::Golu);
BENCHMARK_CAPTURE(BM_Activation, gelu, ActivationKind::Gelu);
BENCHMARK_CAPTURE(BM_Activation, hswish, ActivationKind::HSwish);

void BM_ImageEncoderForward(benchmark::State& state) {
    const ModelConfig cfg = desk_preset();
    std::mt19937_64 rng(4);
    const ImageEncoder enc(cfg.image, rng);
    const Tensor img = random_tensor({3, cfg.image.input_size, cfg.image.input_size}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(enc.encode(img));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(enc.cost_report().total));
}
BENCHMARK(BM_ImageEncoderForward);

void BM_TextEncoderForward(benchmark::State& state) {
    ModelConfig cfg = desk_preset();
    cfg.text.vocab_size = 512;
    std::mt19937_64 rng(5);
    const TextEncoder enc(cfg.text, rng);
    TokenRow row;
    for (int i = 0; i < cfg.text.max_len; ++i) {
        row.ids.push_back(4 + static_cast<int>(uniform_below(rng, 500)));
        row.mask.push_back(1);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(enc.encode_row(row));
    }
}
BENCHMARK(BM_TextEncoderForward);

void BM_FusionForward(benchmark::State& state) {
    const ModelConfig cfg = desk_preset();
    std::mt19937_64 rng(6);
    const FusionHead head(cfg.fusion, rng);
    const Tensor v = random_tensor({cfg.fusion.embed_dim}, rng);
    const Tensor t = random_tensor({cfg.fusion.embed_dim}, rng);
    std::mt19937_64 dropout_rng(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(head.forward(v, t, /*train_mode=*/false, dropout_rng));
    }
}
BENCHMARK(BM_FusionForward);

RatingModel desk_model(std::uint64_t seed) {
    ModelConfig cfg = desk_preset();
    cfg.seed = seed;
    const Vocabulary vocab = Vocabulary::build(
        {"clean grid layout with soft colors", "cluttered dark panel wall", "minimal checkout form"});
    return RatingModel(cfg, vocab);
}

void BM_FullPredict(benchmark::State& state) {
    RatingModel model = desk_model(8);
    std::mt19937_64 rng(9);
    const Tensor img = random_tensor({3, model.config().image.input_size, model.config().image.input_size}, rng);
    const TokenRow row = tokenize("clean grid layout with soft colors", model.vocab(),
                                  model.config().text.max_len);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.predict(img, row, /*train_mode=*/false));
    }
}
BENCHMARK(BM_FullPredict);

void BM_TrainStepBackward(benchmark::State& state) {
    RatingModel model = desk_model(10);
    std::mt19937_64 rng(11);
    const Tensor img = random_tensor({3, model.config().image.input_size, model.config().image.input_size}, rng);
    const TokenRow row = tokenize("cluttered dark panel wall", model.vocab(), model.config().text.max_len);
    const NamedParams params = model.parameters();
    for (auto _ : state) {
        Tensor pred = model.predict(img, row, /*train_mode=*/true);
        Tensor err = sub(pred, Tensor::scalar(3.0));
        Tensor loss = mul(err, err);
        loss.backward();
        benchmark::DoNotOptimize(loss.item());
        for (const auto& [name, p] : params) {
            Tensor(p).zero_grad();
        }
    }
}
BENCHMARK(BM_TrainStepBackward);

}  // namespace

BENCHMARK_MAIN();
