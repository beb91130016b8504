#include "uirate/activations.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace uirate {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Overflow-safe ln(1 + e^x).
double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

ActivationKind activation_from_string(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "swish") return ActivationKind::Swish;
    if (s == "mish") return ActivationKind::Mish;
    if (s == "gelu") return ActivationKind::Gelu;
    if (s == "golu") return ActivationKind::Golu;
    if (s == "sigmoid") return ActivationKind::Sigmoid;
    if (s == "hswish") return ActivationKind::HSwish;
    if (s == "identity" || s == "none") return ActivationKind::Identity;
    throw std::invalid_argument("unknown activation '" + name +
                                "' (expected swish|mish|gelu|golu|sigmoid|hswish|identity)");
}

std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Swish: return "swish";
        case ActivationKind::Mish: return "mish";
        case ActivationKind::Gelu: return "gelu";
        case ActivationKind::Golu: return "golu";
        case ActivationKind::Sigmoid: return "sigmoid";
        case ActivationKind::HSwish: return "hswish";
        case ActivationKind::Identity: return "identity";
    }
    throw std::invalid_argument("unknown activation tag");
}

// Definitions: Swish x*sigma(x); Mish x*tanh(softplus(x)); GELU exact erf
// form x*Phi(x); GoLU (Gompertz) x*exp(-exp(-x)); HSwish x*relu6(x+3)/6.
double activation_value(ActivationKind kind, double x) {
    switch (kind) {
        case ActivationKind::Swish: return x * sigmoid(x);
        case ActivationKind::Mish: return x * std::tanh(softplus(x));
        case ActivationKind::Gelu: return x * normal_cdf(x);
        case ActivationKind::Golu: return x * std::exp(-std::exp(-x));
        case ActivationKind::Sigmoid: return sigmoid(x);
        case ActivationKind::HSwish: {
            const double r6 = std::clamp(x + 3.0, 0.0, 6.0);
            return x * r6 / 6.0;
        }
        case ActivationKind::Identity: return x;
    }
    throw std::invalid_argument("unknown activation tag");
}

double activation_derivative(ActivationKind kind, double x) {
    switch (kind) {
        case ActivationKind::Swish: {
            const double s = sigmoid(x);
            return s * (1.0 + x * (1.0 - s));
        }
        case ActivationKind::Mish: {
            const double t = std::tanh(softplus(x));
            return t + x * (1.0 - t * t) * sigmoid(x);
        }
        case ActivationKind::Gelu: return normal_cdf(x) + x * normal_pdf(x);
        case ActivationKind::Golu: {
            const double g = std::exp(-std::exp(-x));
            return g * (1.0 + x * std::exp(-x));
        }
        case ActivationKind::Sigmoid: {
            const double s = sigmoid(x);
            return s * (1.0 - s);
        }
        case ActivationKind::HSwish:
            if (x <= -3.0) return 0.0;
            if (x >= 3.0) return 1.0;
            return (2.0 * x + 3.0) / 6.0;
        case ActivationKind::Identity: return 1.0;
    }
    throw std::invalid_argument("unknown activation tag");
}

Tensor activate(const Tensor& x, ActivationKind kind) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = activation_value(kind, xv[i]);

    auto n = std::make_shared<detail::Node>();
    n->shape = x.shape();
    n->value = std::move(out);
    n->parents = {x.shared_node()};
    n->requires_grad = x.requires_grad();
    n->op = "activate";
    check_finite("activate", n->value);
    if (n->requires_grad) {
        detail::Node* px = n->parents[0].get();
        n->backward = [px, kind](detail::Node& self) {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * activation_derivative(kind, px->value[i]);
            }
        };
    }
    return Tensor::wrap(std::move(n));
}

}  // namespace uirate
