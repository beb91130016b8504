#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uirate/rand.hpp"
#include "uirate/tensor.hpp"

namespace uirate {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Fan-in-scaled normal init: N(0, 1/fan_in). fan_in must be positive.
inline Tensor randn_param(Shape shape, int fan_in, std::mt19937_64& rng) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = stddev * unit_gaussian(rng);
    return Tensor::from_vector(std::move(shape), std::move(data), /*requires_grad=*/true);
}

inline Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), /*requires_grad=*/true); }

inline Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, /*requires_grad=*/true); }

}  // namespace uirate
