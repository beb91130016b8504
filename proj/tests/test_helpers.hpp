#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "uirate/rand.hpp"
#include "uirate/tensor.hpp"

namespace testutil {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> out(n);
    for (double& v : out) v = lo + (hi - lo) * uirate::unit_uniform(rng);
    return out;
}

inline uirate::Tensor random_tensor(std::mt19937_64& rng, uirate::Shape shape, bool requires_grad = false,
                                    double lo = -2.0, double hi = 2.0) {
    const auto n = static_cast<std::size_t>(uirate::shape_numel(shape));
    return uirate::Tensor::from_vector(std::move(shape), random_vector(rng, n, lo, hi), requires_grad);
}

// Self-cleaning scratch directory under the system temp root.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               (tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str(const std::string& rel = "") const {
        return rel.empty() ? path.string() : (path / rel).string();
    }
};

}  // namespace testutil
