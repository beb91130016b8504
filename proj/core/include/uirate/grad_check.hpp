#pragma once

#include <functional>

#include "uirate/tensor.hpp"

namespace uirate {

// Central-difference check of reverse-mode gradients. `f` must build a fresh
// graph from its argument and return a scalar. Returns the max over
// coordinates of |analytic - numeric| / max(1, |analytic|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// Same check against a module parameter: `f` rebuilds its graph from current
// leaf values on every call, and `param` is one of the leaves it reads.
double grad_check_param(const std::function<Tensor()>& f, Tensor& param, double h = 1e-5);

}  // namespace uirate
