#pragma once

#include <optional>
#include <string>
#include <vector>

namespace uirate {

// Five regression measures over one prediction set. r2 / pearson_r are empty
// (not NaN) when the inputs are degenerate: constant y kills both, constant
// y_hat kills pearson_r only.
struct MetricsReport {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
    std::optional<double> r2;
    std::optional<double> pearson_r;
    std::size_t n = 0;
    bool clamped = false;  // set by callers that clamp predictions before scoring

    std::string to_json(int indent = -1) const;  // optionals serialize as "undefined"
};

MetricsReport evaluate(const std::vector<double>& y, const std::vector<double>& y_hat);

// Sum with pairwise splitting; keeps absolute error near eps even for large n.
double pairwise_sum(const double* data, std::size_t n);
double pairwise_sum(const std::vector<double>& data);

}  // namespace uirate
