#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uirate/model.hpp"
#include "uirate/trainer.hpp"

namespace uirate {

// One experiment row. Axis values are validated against closed sets before
// any training starts; rows for architectures this implementation cannot
// realize are carried through as explicit unsupported entries.
struct AblationSpec {
    std::string name;
    std::string activation = "swish";          // swish | mish | golu | gelu | identity
    std::string image_init = "random";         // random
    std::string text_init = "random";          // random
    std::string text_encoder = "transformer";  // transformer | simple-recurrent
    bool supported = true;
    std::string unsupported_reason;
    std::string note;  // how the row maps onto this implementation
};

void validate_spec(const AblationSpec& spec);

struct AblationRow {
    std::string name;
    bool supported = true;
    std::string unsupported_reason;
    std::string note;
    std::string eval_split;  // test | val | train, whichever was non-empty first
    MetricsReport metrics;   // meaningful only when supported
};

struct AblationTable {
    std::vector<AblationRow> rows;

    // All renderings use the activation-table column order:
    // MAE, MSE, RMSE, R2, Pearson-r.
    std::string to_json(int indent = -1) const;
    std::string to_csv() const;
    std::string to_text() const;
};

// The four-activation comparison suite.
std::vector<AblationSpec> activation_suite();
// The ten-variation study; rows keep their published labels and order.
std::vector<AblationSpec> table2_suite();

struct AblationRunOptions {
    int epochs_override = 0;  // > 0 replaces base.epochs for every row
    std::function<void(const AblationRow&)> on_row;
};

// Trains every supported spec under the base config's seed and data splits,
// then scores each on the same held-out indices.
AblationTable run_ablation(const std::vector<AblationSpec>& suite, const Manifest& manifest,
                           const ModelConfig& base, const AblationRunOptions& opts = {});

}  // namespace uirate
