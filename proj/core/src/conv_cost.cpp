#include "uirate/conv_cost.hpp"

#include <stdexcept>
#include <string>

namespace uirate {

void ConvShape::validate() const {
    if (d_f < 1 || m < 1 || n < 1 || d_k < 1) {
        throw std::invalid_argument("ConvShape: all fields must be positive");
    }
    if (d_k > d_f) {
        throw std::invalid_argument("ConvShape: kernel size " + std::to_string(d_k) +
                                    " exceeds feature size " + std::to_string(d_f));
    }
}

std::uint64_t standard_conv_cost(const ConvShape& s) {
    s.validate();
    const auto df = static_cast<std::uint64_t>(s.d_f);
    const auto dk = static_cast<std::uint64_t>(s.d_k);
    return dk * dk * static_cast<std::uint64_t>(s.m) * static_cast<std::uint64_t>(s.n) * df * df;
}

std::uint64_t depthwise_conv_cost(const ConvShape& s) {
    s.validate();
    const auto df = static_cast<std::uint64_t>(s.d_f);
    const auto dk = static_cast<std::uint64_t>(s.d_k);
    return dk * dk * static_cast<std::uint64_t>(s.m) * df * df;
}

std::uint64_t separable_conv_cost(const ConvShape& s) {
    s.validate();
    const auto df = static_cast<std::uint64_t>(s.d_f);
    return depthwise_conv_cost(s) + static_cast<std::uint64_t>(s.m) * static_cast<std::uint64_t>(s.n) * df * df;
}

double cost_reduction_ratio(const ConvShape& s) {
    return static_cast<double>(separable_conv_cost(s)) / static_cast<double>(standard_conv_cost(s));
}

}  // namespace uirate
