#pragma once

#include <cstdint>

namespace uirate {

// Square feature map and kernel geometry for the analytic cost model.
// d_f: spatial size, m: input channels, n: output channels, d_k: kernel size.
struct ConvShape {
    int d_f = 1;
    int m = 1;
    int n = 1;
    int d_k = 1;

    void validate() const;  // throws std::invalid_argument on bad fields
};

// Multiply-accumulate counts for same-padding stride-1 convolutions.
std::uint64_t standard_conv_cost(const ConvShape& s);   // d_k^2 * m * n * d_f^2
std::uint64_t depthwise_conv_cost(const ConvShape& s);  // d_k^2 * m * d_f^2
std::uint64_t separable_conv_cost(const ConvShape& s);  // depthwise + m * n * d_f^2

// separable / standard; algebraically 1/n + 1/d_k^2.
double cost_reduction_ratio(const ConvShape& s);

}  // namespace uirate
