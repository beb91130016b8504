#include "uirate/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace uirate {

double pairwise_sum(const double* data, std::size_t n) {
    if (n <= 8) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += data[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

double pairwise_sum(const std::vector<double>& data) { return pairwise_sum(data.data(), data.size()); }

MetricsReport evaluate(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.size() != y_hat.size()) {
        throw std::invalid_argument("evaluate: length mismatch " + std::to_string(y.size()) +
                                    " vs " + std::to_string(y_hat.size()));
    }
    if (y.size() < 2) throw std::invalid_argument("evaluate: need at least 2 samples");

    const std::size_t n = y.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = std::abs(y[i] - y_hat[i]);
    const double mae = pairwise_sum(buf) * inv_n;
    for (std::size_t i = 0; i < n; ++i) buf[i] = (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    const double ss_res = pairwise_sum(buf);
    const double mse = ss_res * inv_n;

    const double mean_y = pairwise_sum(y) * inv_n;
    const double mean_yh = pairwise_sum(y_hat) * inv_n;

    for (std::size_t i = 0; i < n; ++i) buf[i] = (y[i] - mean_y) * (y[i] - mean_y);
    const double ss_tot = pairwise_sum(buf);
    for (std::size_t i = 0; i < n; ++i) buf[i] = (y_hat[i] - mean_yh) * (y_hat[i] - mean_yh);
    const double ss_hat = pairwise_sum(buf);
    for (std::size_t i = 0; i < n; ++i) buf[i] = (y[i] - mean_y) * (y_hat[i] - mean_yh);
    const double ss_cross = pairwise_sum(buf);

    MetricsReport r;
    r.n = n;
    r.mae = mae;
    r.mse = mse;
    r.rmse = std::sqrt(mse);
    if (ss_tot > 0.0) {
        r.r2 = 1.0 - ss_res / ss_tot;
        if (ss_hat > 0.0) {
            double p = ss_cross / std::sqrt(ss_tot * ss_hat);
            if (p > 1.0) p = 1.0;
            if (p < -1.0) p = -1.0;
            r.pearson_r = p;
        }
    }
    return r;
}

std::string MetricsReport::to_json(int indent) const {
    nlohmann::json j;
    j["n"] = n;
    j["mae"] = mae;
    j["mse"] = mse;
    j["rmse"] = rmse;
    j["r2"] = r2 ? nlohmann::json(*r2) : nlohmann::json("undefined");
    j["pearson_r"] = pearson_r ? nlohmann::json(*pearson_r) : nlohmann::json("undefined");
    j["clamped"] = clamped;
    return j.dump(indent);
}

}  // namespace uirate
