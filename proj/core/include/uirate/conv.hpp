#pragma once

#include <cstdint>

#include "uirate/tensor.hpp"

namespace uirate {

// Running multiply-accumulate count of every convolution forward pass on this
// thread. The kernels operate on an explicitly zero-padded input, so the
// count equals the analytic cost formulas exactly.
std::uint64_t conv_mac_count();
void reset_conv_mac_count();

// All kernels take x as [C, H, W] and use "same" zero padding (odd kernel
// sizes only). Bias may be an undefined Tensor.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1);            // w [N, C, k, k]
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1);  // w [C, k, k]
Tensor pointwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& b);                  // w [N, C]

// [C, H, W] -> [C] spatial mean.
Tensor global_avg_pool(const Tensor& x);

}  // namespace uirate
