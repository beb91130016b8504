#include "uirate/ablation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "uirate/activations.hpp"
#include "uirate/data.hpp"

namespace uirate {

namespace {

ActivationKind parse_ablation_activation(const AblationSpec& spec) {
    ActivationKind kind;
    try {
        kind = activation_from_string(spec.activation);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("ablation '" + spec.name + "': unknown activation '" + spec.activation + "'");
    }
    switch (kind) {
        case ActivationKind::Swish:
        case ActivationKind::Mish:
        case ActivationKind::Golu:
        case ActivationKind::Gelu:
        case ActivationKind::Identity:
            return kind;
        default:
            throw std::invalid_argument("ablation '" + spec.name + "': activation '" + spec.activation +
                                        "' is outside the study set (swish, mish, golu, gelu, identity)");
    }
}

TextBackbone parse_ablation_backbone(const AblationSpec& spec) {
    try {
        return text_backbone_from_string(spec.text_encoder);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("ablation '" + spec.name + "': unknown text encoder '" + spec.text_encoder + "'");
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string fixed4(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

std::string fixed4_opt(const std::optional<double>& v) {
    return v ? fixed4(*v) : std::string("undefined");
}

}  // namespace

void validate_spec(const AblationSpec& spec) {
    if (spec.name.empty()) throw std::invalid_argument("ablation spec without a name");
    if (!spec.supported) {
        if (spec.unsupported_reason.empty()) {
            throw std::invalid_argument("ablation '" + spec.name + "': unsupported rows must carry a reason");
        }
        return;
    }
    parse_ablation_activation(spec);
    parse_ablation_backbone(spec);
    if (spec.image_init != "random") {
        throw std::invalid_argument("ablation '" + spec.name + "': unknown image init '" + spec.image_init +
                                    "' (only 'random' exists; there are no pretrained weights to load)");
    }
    if (spec.text_init != "random") {
        throw std::invalid_argument("ablation '" + spec.name + "': unknown text init '" + spec.text_init +
                                    "' (only 'random' exists; there are no pretrained weights to load)");
    }
}

std::vector<AblationSpec> activation_suite() {
    std::vector<AblationSpec> suite;
    for (const char* name : {"Swish", "Mish", "GoLU", "GELU"}) {
        AblationSpec s;
        s.name = name;
        s.activation = name;
        suite.push_back(std::move(s));
    }
    return suite;
}

std::vector<AblationSpec> table2_suite() {
    std::vector<AblationSpec> suite;
    auto supported = [&suite](std::string name, std::string note) {
        AblationSpec s;
        s.name = std::move(name);
        s.note = std::move(note);
        suite.push_back(std::move(s));
        return &suite.back();
    };
    auto unsupported = [&suite](std::string name, std::string reason) {
        AblationSpec s;
        s.name = std::move(name);
        s.supported = false;
        s.unsupported_reason = std::move(reason);
        suite.push_back(std::move(s));
    };

    supported("Without image pretrained",
              "every encoder here trains from random init, so this row is the from-scratch baseline");
    supported("Without text pretrained",
              "text weights are always randomly initialized in this implementation");
    supported("No activation function after fusion", "")->activation = "identity";
    supported("Text vector using LSTM",
              "realized with the Elman-style recurrent encoder, the recurrent baseline available here")
        ->text_encoder = "simple-recurrent";
    unsupported("Text vector using DBN", "no deep belief network implementation in this repository");
    const char* cnn_reason = "pretrained external CNN backbones are out of scope for this from-scratch build";
    unsupported("Image embedding using ResNET50", cnn_reason);
    unsupported("Image embedding using EFFICIENTNET B3", cnn_reason);
    unsupported("Image embedding using DENSENET121", cnn_reason);
    unsupported("Image embedding using CONVNEXT_TINY", cnn_reason);
    unsupported("Image embedding using INCEPTION_V3", cnn_reason);
    return suite;
}

AblationTable run_ablation(const std::vector<AblationSpec>& suite, const Manifest& manifest,
                           const ModelConfig& base, const AblationRunOptions& opts) {
    base.validate();
    for (const auto& spec : suite) validate_spec(spec);
    if (manifest.samples.empty()) throw std::invalid_argument("run_ablation: empty manifest");

    Manifest data = manifest;
    if (data.splits.size() != data.samples.size()) assign_splits(data, base.seed);
    const auto train_idx = split_indices(data, Split::Train);
    const auto val_idx = split_indices(data, Split::Val);
    const auto test_idx = split_indices(data, Split::Test);

    std::vector<std::size_t> eval_idx = test_idx;
    std::string eval_split = "test";
    if (eval_idx.empty()) {
        eval_idx = val_idx;
        eval_split = "val";
    }
    if (eval_idx.empty()) {
        eval_idx = train_idx;
        eval_split = "train";
    }

    std::vector<std::string> train_texts;
    train_texts.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_texts.push_back(sample_text(data.samples[i]));
    const Vocabulary vocab = Vocabulary::build(train_texts);

    AblationTable table;
    for (const auto& spec : suite) {
        AblationRow row;
        row.name = spec.name;
        row.supported = spec.supported;
        row.unsupported_reason = spec.unsupported_reason;
        row.note = spec.note;
        if (spec.supported) {
            ModelConfig cfg = base;
            cfg.fusion.activation = parse_ablation_activation(spec);
            cfg.text_backbone = parse_ablation_backbone(spec);
            RatingModel model(cfg, vocab);
            TrainOptions topts;
            topts.train_idx = train_idx;
            topts.val_idx = val_idx;
            topts.epochs_override = opts.epochs_override;
            train_model(model, data, topts);
            row.eval_split = eval_split;
            row.metrics = evaluate_model(model, data, eval_idx);
        }
        if (opts.on_row) opts.on_row(row);
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string AblationTable::to_json(int indent) const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json r;
        r["name"] = row.name;
        r["supported"] = row.supported;
        r["reason"] = row.unsupported_reason;
        r["note"] = row.note;
        r["eval_split"] = row.eval_split;
        r["metrics"] = row.supported ? nlohmann::json::parse(row.metrics.to_json()) : nlohmann::json(nullptr);
        j.push_back(std::move(r));
    }
    return j.dump(indent);
}

std::string AblationTable::to_csv() const {
    std::string out = "name,status,mae,mse,rmse,r2,pearson_r,eval_split,detail\n";
    for (const auto& row : rows) {
        out += csv_field(row.name);
        if (row.supported) {
            out += ",ok,";
            out += format_double(row.metrics.mae) + ',' + format_double(row.metrics.mse) + ',' +
                   format_double(row.metrics.rmse) + ',';
            out += row.metrics.r2 ? format_double(*row.metrics.r2) : std::string("undefined");
            out += ',';
            out += row.metrics.pearson_r ? format_double(*row.metrics.pearson_r) : std::string("undefined");
            out += ',' + row.eval_split + ',' + csv_field(row.note);
        } else {
            out += ",unsupported,,,,,,," + csv_field(row.unsupported_reason);
        }
        out += '\n';
    }
    return out;
}

std::string AblationTable::to_text() const {
    std::size_t name_w = std::string("Variant").size();
    for (const auto& row : rows) name_w = std::max(name_w, row.name.size());

    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w + 2)) << "Variant" << std::setw(10) << "MAE"
       << std::setw(10) << "MSE" << std::setw(10) << "RMSE" << std::setw(11) << "R2"
       << "Pearson-r\n";
    for (const auto& row : rows) {
        os << std::left << std::setw(static_cast<int>(name_w + 2)) << row.name;
        if (row.supported) {
            os << std::setw(10) << fixed4(row.metrics.mae) << std::setw(10) << fixed4(row.metrics.mse)
               << std::setw(10) << fixed4(row.metrics.rmse) << std::setw(11) << fixed4_opt(row.metrics.r2)
               << fixed4_opt(row.metrics.pearson_r);
        } else {
            os << "unsupported: " << row.unsupported_reason;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace uirate
