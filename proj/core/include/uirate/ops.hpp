#pragma once

#include <random>
#include <vector>

#include "uirate/tensor.hpp"

namespace uirate {

// Elementwise arithmetic. Operands must share a shape; mismatches throw
// std::invalid_argument naming both shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor tanh(const Tensor& x);

// y = scale * x + shift with constant coefficients.
Tensor scale_shift(const Tensor& x, double scale, double shift = 0.0);

// Structure ops.
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);                      // rank-2
Tensor slice_cols(const Tensor& x, int c0, int c1);     // rank-2, [c0, c1)
Tensor row(const Tensor& x, int r);                     // rank-2 -> rank-1
Tensor stack_rows(const std::vector<Tensor>& rows);     // k vectors [d] -> [k, d]

// Reductions.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_axis(const Tensor& x, int axis);
Tensor dot(const Tensor& a, const Tensor& b);           // rank-1 -> scalar

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k] x [k,n]
Tensor add_rowvec(const Tensor& x, const Tensor& v);    // [n,m] + [m]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x rank-1 or rank-2, w [in,out]

// Row softmax over logits / temperature. Temperature must be positive.
Tensor softmax_rows(const Tensor& x, double temperature = 1.0);
Tensor log_softmax_rows(const Tensor& x, double temperature = 1.0);
// Masked variant: positions with key_mask == 0 get weight zero. A row with no
// valid key yields an all-zero row instead of NaN.
Tensor masked_softmax_rows(const Tensor& x, const std::vector<int>& key_mask, double temperature = 1.0);

// Last-axis layer normalization followed by the affine (gain, bias) map.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Mask-aware arithmetic mean over rows of x [L, D]; rows with mask == 0 are
// skipped. An all-zero mask yields the zero vector.
Tensor masked_mean_rows(const Tensor& x, const std::vector<int>& mask);

// Row gather: table [V, D], ids in [0, V) -> [len(ids), D].
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// Inverted dropout. Train mode samples a keep mask with probability 1 - rate
// and rescales kept entries by 1/(1 - rate); eval mode is the identity map.
Tensor dropout(const Tensor& x, double rate, bool train_mode, std::mt19937_64& rng);

}  // namespace uirate
