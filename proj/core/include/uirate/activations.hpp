#pragma once

#include <string>

#include "uirate/tensor.hpp"

namespace uirate {

// Closed set of activation functions exercised by the ablation harness.
// Identity exists only to realize the no-activation-after-fusion variant.
enum class ActivationKind {
    Swish,
    Mish,
    Gelu,
    Golu,
    Sigmoid,
    HSwish,
    Identity,
};

// Parses "swish", "mish", "gelu", "golu", "sigmoid", "hswish", "identity"
// (case-insensitive); unknown names raise std::invalid_argument.
ActivationKind activation_from_string(const std::string& name);
std::string to_string(ActivationKind kind);

double activation_value(ActivationKind kind, double x);
double activation_derivative(ActivationKind kind, double x);

// Elementwise activation with the matching backward rule.
Tensor activate(const Tensor& x, ActivationKind kind);

}  // namespace uirate
