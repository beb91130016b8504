#include <cmath>
#include <random>

#include "doctest.h"

#include "uirate/conv.hpp"
#include "uirate/conv_cost.hpp"
#include "uirate/grad_check.hpp"
#include "uirate/ops.hpp"

#include "test_helpers.hpp"

using namespace uirate;
using testutil::random_tensor;

TEST_CASE("conv shape validation") {
    ConvShape ok{8, 16, 32, 3};
    CHECK_NOTHROW(ok.validate());
    CHECK_THROWS_AS((ConvShape{0, 1, 1, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ConvShape{4, 1, 1, 5}.validate()), std::invalid_argument);  // d_k > d_f
    CHECK_THROWS_AS((ConvShape{4, -2, 1, 3}.validate()), std::invalid_argument);
}

TEST_CASE("cost formula point values") {
    ConvShape s{8, 16, 32, 3};
    CHECK(standard_conv_cost(s) == 294912);
    CHECK(depthwise_conv_cost(s) == 9216);
    CHECK(separable_conv_cost(s) == 41984);
    CHECK(cost_reduction_ratio(s) == doctest::Approx(1.0 / 32 + 1.0 / 9).epsilon(1e-15));

    CHECK(standard_conv_cost(ConvShape{1, 1, 1, 1}) == 1);
    CHECK(depthwise_conv_cost(ConvShape{2, 1, 1, 1}) == 4);
    CHECK(cost_reduction_ratio(ConvShape{5, 3, 1, 1}) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("ratio equals closed form for random shapes") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        ConvShape s;
        s.d_k = 1 + 2 * static_cast<int>(uniform_below(rng, 3));  // 1, 3, 5
        s.d_f = s.d_k + static_cast<int>(uniform_below(rng, 10));
        s.m = 1 + static_cast<int>(uniform_below(rng, 12));
        s.n = 1 + static_cast<int>(uniform_below(rng, 12));
        s.validate();
        const double closed = 1.0 / s.n + 1.0 / (static_cast<double>(s.d_k) * s.d_k);
        CHECK(std::abs(cost_reduction_ratio(s) - closed) < 1e-12);
    }
}

TEST_CASE("instrumented MAC count equals the analytic formulas exactly") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 25; ++trial) {
        ConvShape s;
        s.d_k = 1 + 2 * static_cast<int>(uniform_below(rng, 3));
        s.d_f = s.d_k + static_cast<int>(uniform_below(rng, 8));
        s.m = 1 + static_cast<int>(uniform_below(rng, 6));
        s.n = 1 + static_cast<int>(uniform_below(rng, 6));
        s.validate();

        Tensor x = random_tensor(rng, {s.m, s.d_f, s.d_f});
        Tensor w_std = random_tensor(rng, {s.n, s.m, s.d_k, s.d_k});
        Tensor w_dw = random_tensor(rng, {s.m, s.d_k, s.d_k});
        Tensor w_pw = random_tensor(rng, {s.n, s.m});

        reset_conv_mac_count();
        conv2d(x, w_std, Tensor{});
        CHECK(conv_mac_count() == standard_conv_cost(s));

        reset_conv_mac_count();
        depthwise_conv2d(x, w_dw, Tensor{});
        pointwise_conv2d(x, w_pw, Tensor{});
        CHECK(conv_mac_count() == separable_conv_cost(s));
    }
}

TEST_CASE("conv2d hand example: 3x3 identity-center kernel reproduces input") {
    Tensor x = Tensor::from_vector({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    std::vector<double> w(9, 0.0);
    w[4] = 1.0;  // center tap
    Tensor out = conv2d(x, Tensor::from_vector({1, 1, 3, 3}, w), Tensor{});
    CHECK(out.shape() == Shape{1, 3, 3});
    CHECK(out.values() == x.values());
}

TEST_CASE("conv2d hand example: all-ones kernel sums the padded neighborhood") {
    Tensor x = Tensor::from_vector({1, 2, 2}, {1, 2, 3, 4});
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor out = conv2d(x, w, Tensor{});
    // Zero padding: each output is the sum of the in-range 2x2 block.
    CHECK(out.values() == std::vector<double>{10, 10, 10, 10});

    Tensor biased = conv2d(x, w, Tensor::from_vector({1}, {0.5}));
    CHECK(biased.values() == std::vector<double>{10.5, 10.5, 10.5, 10.5});
}

TEST_CASE("stride-2 output geometry") {
    Tensor x = Tensor::zeros({2, 8, 8});
    Tensor out = conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor{}, 2);
    CHECK(out.shape() == Shape{3, 4, 4});
    Tensor dw = depthwise_conv2d(x, Tensor::zeros({2, 3, 3}), Tensor{}, 2);
    CHECK(dw.shape() == Shape{2, 4, 4});
}

TEST_CASE("even kernel sizes are rejected") {
    Tensor x = Tensor::zeros({1, 4, 4});
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 1, 2, 2}), Tensor{}), std::invalid_argument);
    CHECK_THROWS_AS(depthwise_conv2d(x, Tensor::zeros({1, 4, 4}), Tensor{}), std::invalid_argument);
}

TEST_CASE("depthwise filters channels independently") {
    Tensor x = Tensor::from_vector({2, 1, 1}, {3.0, 5.0});
    Tensor w = Tensor::from_vector({2, 1, 1}, {2.0, -1.0});
    Tensor out = depthwise_conv2d(x, w, Tensor{});
    CHECK(out.values() == std::vector<double>{6.0, -5.0});
}

TEST_CASE("pointwise is a channel-mixing matrix") {
    Tensor x = Tensor::from_vector({2, 1, 2}, {1, 2, 3, 4});  // ch0 = [1,2], ch1 = [3,4]
    Tensor w = Tensor::from_vector({1, 2}, {10, 100});
    Tensor out = pointwise_conv2d(x, w, Tensor{});
    CHECK(out.shape() == Shape{1, 1, 2});
    CHECK(out.values() == std::vector<double>{310, 420});
}

TEST_CASE("global_avg_pool") {
    Tensor x = Tensor::from_vector({2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    Tensor out = global_avg_pool(x);
    CHECK(out.shape() == Shape{2});
    CHECK(out.values() == std::vector<double>{2.5, 25.0});
}

TEST_CASE("conv gradients pass finite differences") {
    std::mt19937_64 rng(41);
    Tensor x = random_tensor(rng, {2, 5, 5});
    Tensor w = random_tensor(rng, {3, 2, 3, 3});
    Tensor b = random_tensor(rng, {3});
    Tensor wd = random_tensor(rng, {2, 3, 3});
    Tensor bd = random_tensor(rng, {2});
    Tensor wp = random_tensor(rng, {4, 2});
    Tensor bp = random_tensor(rng, {4});

    CHECK(grad_check([&](const Tensor& t) { return sum_all(conv2d(t, w, b)); }, x) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(conv2d(x, t, b)); }, w) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(conv2d(x, w, t)); }, b) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(conv2d(t, w, b, 2)); }, x) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(depthwise_conv2d(t, wd, bd)); }, x) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(depthwise_conv2d(x, t, bd, 2)); }, wd) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(pointwise_conv2d(t, wp, bp)); }, x) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(pointwise_conv2d(x, t, bp)); }, wp) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(global_avg_pool(t)); }, x) < 1e-9);
}

TEST_CASE("backward pass does not advance the MAC counter") {
    std::mt19937_64 rng(43);
    Tensor x = random_tensor(rng, {1, 4, 4}, true);
    Tensor w = random_tensor(rng, {1, 1, 3, 3}, true);
    reset_conv_mac_count();
    Tensor out = sum_all(conv2d(x, w, Tensor{}));
    const std::uint64_t forward_macs = conv_mac_count();
    CHECK(forward_macs == standard_conv_cost(ConvShape{4, 1, 1, 3}));
    out.backward();
    CHECK(conv_mac_count() == forward_macs);
}
