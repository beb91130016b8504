#include "uirate/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uirate {

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("grad_check: step size must be positive");

    Tensor probe = Tensor::from_vector(x.shape(), x.values(), /*requires_grad=*/true);
    Tensor out = f(probe);
    if (out.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    out.backward();
    const std::vector<double> analytic =
        probe.has_grad() ? probe.grad() : std::vector<double>(x.values().size(), 0.0);

    std::vector<double> point = x.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + h;
        const double fp = f(Tensor::from_vector(x.shape(), point)).item();
        point[i] = saved - h;
        const double fm = f(Tensor::from_vector(x.shape(), point)).item();
        point[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

double grad_check_param(const std::function<Tensor()>& f, Tensor& param, double h) {
    if (h <= 0.0) throw std::invalid_argument("grad_check_param: step size must be positive");
    if (!param.requires_grad()) throw std::invalid_argument("grad_check_param: parameter does not require grad");

    param.zero_grad();
    Tensor out = f();
    if (out.numel() != 1) throw std::invalid_argument("grad_check_param: f must return a scalar");
    out.backward();
    const std::vector<double> analytic =
        param.has_grad() ? param.grad() : std::vector<double>(param.values().size(), 0.0);
    param.zero_grad();

    auto& vals = param.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double saved = vals[i];
        vals[i] = saved + h;
        const double fp = f().item();
        vals[i] = saved - h;
        const double fm = f().item();
        vals[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace uirate
