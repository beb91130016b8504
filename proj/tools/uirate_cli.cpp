#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "uirate/ablation.hpp"
#include "uirate/checkpoint.hpp"
#include "uirate/conv_cost.hpp"
#include "uirate/data.hpp"
#include "uirate/distill.hpp"
#include "uirate/image_io.hpp"
#include "uirate/model.hpp"
#include "uirate/synthetic.hpp"
#include "uirate/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct JsonOut {
    std::string path;
    bool no_timestamp = false;
};

void add_json_flags(CLI::App* cmd, JsonOut& out) {
    cmd->add_option("--json", out.path, "Write a machine-readable JSON report to this path");
    cmd->add_flag("--no-timestamp", out.no_timestamp, "Omit the timestamp so reports are byte-reproducible");
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void emit_json(const JsonOut& out, json j) {
    if (out.path.empty()) return;
    if (!out.no_timestamp) j["generated_at"] = iso_timestamp();
    std::ofstream f(out.path);
    if (!f) throw std::runtime_error("cannot open for write: " + out.path);
    f << j.dump(2) << '\n';
}

json metrics_json(const uirate::MetricsReport& m) { return json::parse(m.to_json()); }

void print_metrics(std::ostream& os, const uirate::MetricsReport& m) {
    os << "n         " << m.n << '\n';
    os << "mae       " << uirate::format_double(m.mae) << '\n';
    os << "mse       " << uirate::format_double(m.mse) << '\n';
    os << "rmse      " << uirate::format_double(m.rmse) << '\n';
    os << "r2        " << (m.r2 ? uirate::format_double(*m.r2) : std::string("undefined")) << '\n';
    os << "pearson_r " << (m.pearson_r ? uirate::format_double(*m.pearson_r) : std::string("undefined")) << '\n';
}

uirate::ModelConfig preset_config(const std::string& preset) {
    if (preset == "desk") return uirate::desk_preset();
    if (preset == "paper") return uirate::paper_preset();
    throw std::invalid_argument("unknown preset '" + preset + "' (expected desk or paper)");
}

// Shared hyperparameter overrides for train and ablate.
struct ConfigFlags {
    std::string preset = "desk";
    std::int64_t seed = -1;
    int epochs = 0;
    double lr = 0.0;
    int batch_size = 0;
    double dropout = -1.0;
    std::string activation;
    std::string loss;
    std::string target_scale;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--preset", preset, "Configuration preset: desk or paper")->capture_default_str();
        cmd->add_option("--seed", seed, "RNG seed override");
        cmd->add_option("--epochs", epochs, "Epoch count override");
        cmd->add_option("--lr", lr, "Learning rate override");
        cmd->add_option("--batch-size", batch_size, "Mini-batch size override");
        cmd->add_option("--dropout", dropout, "Fusion-head dropout override");
        cmd->add_option("--activation", activation, "Post-fusion activation override");
        cmd->add_option("--loss", loss, "Training loss: mse or mae");
        cmd->add_option("--target-scale", target_scale, "Regression target scale: raw or minmax");
    }

    uirate::ModelConfig build() const {
        uirate::ModelConfig cfg = preset_config(preset);
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (epochs > 0) cfg.epochs = epochs;
        if (lr > 0.0) cfg.learning_rate = lr;
        if (batch_size > 0) cfg.batch_size = batch_size;
        if (dropout >= 0.0) cfg.fusion.dropout = dropout;
        if (!activation.empty()) cfg.fusion.activation = uirate::activation_from_string(activation);
        if (!loss.empty()) cfg.loss = uirate::loss_from_string(loss);
        if (!target_scale.empty()) cfg.target_scale = uirate::target_scale_from_string(target_scale);
        cfg.validate();
        return cfg;
    }
};

uirate::Manifest load_for_run(const std::string& path, uirate::LoadReport* report) {
    uirate::Manifest m = uirate::load_manifest(path, uirate::manifest_format_from_path(path), report);
    if (m.samples.empty()) throw std::invalid_argument("manifest has no usable rows: " + path);
    return m;
}

uirate::Vocabulary vocab_from_split(const uirate::Manifest& m, const std::vector<std::size_t>& idx) {
    std::vector<std::string> texts;
    texts.reserve(idx.size());
    for (std::size_t i : idx) texts.push_back(uirate::sample_text(m.samples[i]));
    return uirate::Vocabulary::build(texts);
}

json history_json(const std::vector<uirate::EpochRecord>& history) {
    json rows = json::array();
    for (const auto& rec : history) {
        json r;
        r["epoch"] = rec.epoch;
        r["train_loss"] = rec.train_loss;
        r["train"] = metrics_json(rec.train);
        r["val"] = rec.has_val ? metrics_json(rec.val) : json(nullptr);
        rows.push_back(std::move(r));
    }
    return rows;
}

int run_train(const std::string& manifest_path, const ConfigFlags& flags, const std::string& out_dir,
              bool clamp, const JsonOut& jout) {
    const uirate::ModelConfig cfg = flags.build();
    uirate::LoadReport report;
    uirate::Manifest m = load_for_run(manifest_path, &report);
    uirate::assign_splits(m, cfg.seed);

    const auto train_idx = uirate::split_indices(m, uirate::Split::Train);
    const auto val_idx = uirate::split_indices(m, uirate::Split::Val);
    const auto test_idx = uirate::split_indices(m, uirate::Split::Test);
    if (train_idx.empty()) throw std::invalid_argument("training split is empty; need more manifest rows");

    uirate::RatingModel model(cfg, vocab_from_split(m, train_idx));

    uirate::TrainOptions topts;
    topts.train_idx = train_idx;
    topts.val_idx = val_idx;
    topts.on_epoch = [](const uirate::EpochRecord& rec) {
        std::cout << "epoch " << rec.epoch << "  loss " << uirate::format_double(rec.train_loss) << "  train_mae "
                  << uirate::format_double(rec.train.mae);
        if (rec.has_val) std::cout << "  val_mae " << uirate::format_double(rec.val.mae);
        std::cout << std::endl;
    };

    uirate::AdamParams ap;
    ap.lr = cfg.learning_rate;
    uirate::Adam adam(model.parameters(), ap);
    std::mt19937_64 shuffle(uirate::shuffle_seed_of(cfg.seed));
    const uirate::TrainResult result = uirate::train_model(model, adam, m, topts, shuffle);

    fs::create_directories(out_dir);
    const std::string history_path = (fs::path(out_dir) / "history.csv").string();
    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.urcp").string();
    uirate::write_history_csv(history_path, result.history);
    uirate::save_checkpoint(uirate::make_checkpoint(model, adam, result), ckpt_path);

    std::cout << "best epoch " << result.best_epoch << "  best " << (result.val_missing ? "train" : "val")
              << "_mae " << uirate::format_double(result.best_mae) << '\n';
    json j;
    j["config"] = json::parse(cfg.to_json_string());
    j["load_report"] = json::parse(report.to_json());
    j["splits"] = {{"train", train_idx.size()}, {"val", val_idx.size()}, {"test", test_idx.size()}};
    j["best_epoch"] = result.best_epoch;
    j["best_mae"] = result.best_mae;
    j["val_missing"] = result.val_missing;
    j["history"] = history_json(result.history);
    j["history_csv"] = history_path;
    j["checkpoint"] = ckpt_path;
    if (!test_idx.empty()) {
        const uirate::MetricsReport test = uirate::evaluate_model(model, m, test_idx, clamp);
        std::cout << "test split:\n";
        print_metrics(std::cout, test);
        j["test"] = metrics_json(test);
    } else {
        j["test"] = nullptr;
    }
    emit_json(jout, std::move(j));
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& manifest_path, const std::string& split,
             bool clamp, const JsonOut& jout) {
    const uirate::Checkpoint ck = uirate::load_checkpoint(ckpt_path);
    uirate::RatingModel model = uirate::model_from_checkpoint(ck);
    uirate::Manifest m = load_for_run(manifest_path, nullptr);
    uirate::assign_splits(m, ck.config.seed);

    std::vector<std::size_t> idx;
    if (split == "all") {
        idx.resize(m.samples.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    } else if (split == "train") {
        idx = uirate::split_indices(m, uirate::Split::Train);
    } else if (split == "val") {
        idx = uirate::split_indices(m, uirate::Split::Val);
    } else if (split == "test") {
        idx = uirate::split_indices(m, uirate::Split::Test);
    } else {
        throw std::invalid_argument("unknown split '" + split + "' (expected train, val, test or all)");
    }
    if (idx.empty()) throw std::invalid_argument("split '" + split + "' is empty for this manifest");

    const uirate::MetricsReport r = uirate::evaluate_model(model, m, idx, clamp);
    std::cout << "split " << split << (clamp ? " (clamped)" : "") << ":\n";
    print_metrics(std::cout, r);

    json j;
    j["checkpoint"] = ckpt_path;
    j["manifest"] = manifest_path;
    j["split"] = split;
    j["clamped"] = clamp;
    j["metrics"] = metrics_json(r);
    emit_json(jout, std::move(j));
    return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& image, const std::string& caption,
                const std::string& category, const JsonOut& jout) {
    const uirate::Checkpoint ck = uirate::load_checkpoint(ckpt_path);
    uirate::RatingModel model = uirate::model_from_checkpoint(ck);

    uirate::ScreenSample s;
    s.image_path = image;
    s.caption = caption;
    s.category = category;
    const uirate::Tensor img = uirate::preprocess_image_file(image, model.config().image.input_size);
    const uirate::TokenRow row = model.tokenize_sample(s);
    const double raw = model.predict_rating(img, row);
    const double clamped = std::clamp(raw, 1.0, 5.0);

    std::cout << "predicted rating " << uirate::format_double(raw) << " (clamped "
              << uirate::format_double(clamped) << ")\n";
    json j;
    j["checkpoint"] = ckpt_path;
    j["image"] = image;
    j["rating"] = raw;
    j["rating_clamped"] = clamped;
    emit_json(jout, std::move(j));
    return 0;
}

int run_ablate(const std::string& suite_name, const std::string& manifest_path, const ConfigFlags& flags,
               const std::string& out_dir, const JsonOut& jout) {
    std::vector<uirate::AblationSpec> suite;
    if (suite_name == "activations") {
        suite = uirate::activation_suite();
    } else if (suite_name == "table2") {
        suite = uirate::table2_suite();
    } else {
        throw std::invalid_argument("unknown suite '" + suite_name + "' (expected activations or table2)");
    }

    const uirate::ModelConfig cfg = flags.build();
    uirate::Manifest m = load_for_run(manifest_path, nullptr);

    uirate::AblationRunOptions ropts;
    ropts.on_row = [](const uirate::AblationRow& row) {
        std::cerr << "[ablate] " << row.name << (row.supported ? " done" : " skipped (unsupported)") << std::endl;
    };
    const uirate::AblationTable table = uirate::run_ablation(suite, m, cfg, ropts);

    std::cout << table.to_text();
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string csv_path = (fs::path(out_dir) / "ablation.csv").string();
        std::ofstream f(csv_path);
        if (!f) throw std::runtime_error("cannot open for write: " + csv_path);
        f << table.to_csv();
        std::cout << "table written to " << csv_path << '\n';
    }
    json j;
    j["suite"] = suite_name;
    j["config"] = json::parse(cfg.to_json_string());
    j["rows"] = json::parse(table.to_json());
    emit_json(jout, std::move(j));
    return 0;
}

int run_conv_cost(int dk, int m, int n, int df, const JsonOut& jout) {
    uirate::ConvShape shape;
    shape.d_k = dk;
    shape.m = m;
    shape.n = n;
    shape.d_f = df;
    shape.validate();
    const auto standard = uirate::standard_conv_cost(shape);
    const auto depthwise = uirate::depthwise_conv_cost(shape);
    const auto separable = uirate::separable_conv_cost(shape);
    const double ratio = uirate::cost_reduction_ratio(shape);

    std::cout << "standard_macs  " << standard << '\n';
    std::cout << "depthwise_macs " << depthwise << '\n';
    std::cout << "separable_macs " << separable << '\n';
    std::cout << "ratio          " << std::fixed << std::setprecision(6) << ratio << '\n';
    std::cout.unsetf(std::ios::fixed);

    json j;
    j["d_k"] = dk;
    j["m"] = m;
    j["n"] = n;
    j["d_f"] = df;
    j["standard_macs"] = standard;
    j["depthwise_macs"] = depthwise;
    j["separable_macs"] = separable;
    j["ratio"] = ratio;
    emit_json(jout, std::move(j));
    return 0;
}

int run_data_stats(const std::string& manifest_path, const JsonOut& jout) {
    uirate::LoadReport report;
    const uirate::Manifest m = load_for_run(manifest_path, &report);
    const uirate::DatasetStats stats = uirate::dataset_stats(m);

    std::cout << "samples " << stats.n << "  mean_rating " << uirate::format_double(stats.rating_mean) << '\n';
    std::cout << "accepted " << report.accepted << "  rejected " << report.rejected << '\n';
    for (const auto& [cat, count] : stats.category_counts) std::cout << "  " << cat << ' ' << count << '\n';

    json j;
    j["manifest"] = manifest_path;
    j["load_report"] = json::parse(report.to_json());
    j["stats"] = json::parse(stats.to_json());
    emit_json(jout, std::move(j));
    return 0;
}

int run_gen_synthetic(std::size_t n, std::uint64_t seed, const std::string& out_dir, int image_size,
                      double noise, const std::string& format, const JsonOut& jout) {
    uirate::SyntheticOptions opts;
    opts.n = n;
    opts.seed = seed;
    opts.dir = out_dir;
    opts.image_size = image_size;
    opts.noise = noise;
    if (format == "csv") {
        opts.manifest_format = uirate::ManifestFormat::Csv;
    } else if (format == "jsonl") {
        opts.manifest_format = uirate::ManifestFormat::Jsonl;
    } else {
        throw std::invalid_argument("unknown format '" + format + "' (expected csv or jsonl)");
    }

    const uirate::Manifest m = uirate::generate_synthetic(opts);
    std::cout << "wrote " << m.samples.size() << " samples under " << out_dir << '\n';
    std::cout << "manifest " << m.source_path << '\n';

    json j;
    j["n"] = m.samples.size();
    j["dir"] = out_dir;
    j["manifest"] = m.source_path;
    j["seed"] = seed;
    emit_json(jout, std::move(j));
    return 0;
}

int run_distill_demo(std::uint64_t seed, int steps, const std::string& out_path, const JsonOut& jout) {
    const uirate::DistillDemoReport report = uirate::run_distill_demo(seed, steps);
    report.write_csv(out_path);
    std::cout << "steps " << report.curve.size() << "  total " << uirate::format_double(report.initial_total)
              << " -> " << uirate::format_double(report.final_total) << '\n';
    std::cout << "curve written to " << out_path << '\n';

    json j = json::parse(report.to_json());
    j["curve_csv"] = out_path;
    j["seed"] = seed;
    emit_json(jout, std::move(j));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Screen rating model: training, evaluation and analysis tools"};
    app.require_subcommand(1);
    std::function<int()> action;

    // train
    auto* train = app.add_subcommand("train", "Train a rating model on a manifest");
    std::string train_manifest, train_out = "run";
    ConfigFlags train_flags;
    bool train_clamp = false;
    JsonOut train_json;
    train->add_option("--manifest", train_manifest, "Dataset manifest (.csv or .jsonl)")->required();
    train->add_option("--out", train_out, "Output directory for history.csv and checkpoint.urcp")
        ->capture_default_str();
    train_flags.add_to(train);
    train->add_flag("--clamp", train_clamp, "Clamp test-split predictions to [1,5] before scoring");
    add_json_flags(train, train_json);
    train->callback([&] {
        action = [&] { return run_train(train_manifest, train_flags, train_out, train_clamp, train_json); };
    });

    // eval
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a manifest split");
    std::string eval_ckpt, eval_manifest, eval_split = "test";
    bool eval_clamp = false;
    JsonOut eval_json;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required();
    eval->add_option("--split", eval_split, "train, val, test or all")->capture_default_str();
    eval->add_flag("--clamp", eval_clamp, "Clamp predictions to [1,5] before scoring");
    add_json_flags(eval, eval_json);
    eval->callback([&] {
        action = [&] { return run_eval(eval_ckpt, eval_manifest, eval_split, eval_clamp, eval_json); };
    });

    // predict
    auto* predict = app.add_subcommand("predict", "Predict the rating for one screenshot");
    std::string pred_ckpt, pred_image, pred_caption, pred_category;
    JsonOut pred_json;
    predict->add_option("--checkpoint", pred_ckpt, "Checkpoint file")->required();
    predict->add_option("--image", pred_image, "Screenshot path (PNG or JPEG)")->required();
    predict->add_option("--caption", pred_caption, "Screen caption text");
    predict->add_option("--category", pred_category, "App category");
    add_json_flags(predict, pred_json);
    predict->callback([&] {
        action = [&] { return run_predict(pred_ckpt, pred_image, pred_caption, pred_category, pred_json); };
    });

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run an ablation suite and print the metrics table");
    std::string abl_suite = "activations", abl_manifest, abl_out;
    ConfigFlags abl_flags;
    JsonOut abl_json;
    ablate->add_option("--suite", abl_suite, "activations or table2")->capture_default_str();
    ablate->add_option("--manifest", abl_manifest, "Dataset manifest")->required();
    ablate->add_option("--out", abl_out, "Directory for ablation.csv");
    abl_flags.add_to(ablate);
    add_json_flags(ablate, abl_json);
    ablate->callback([&] {
        action = [&] { return run_ablate(abl_suite, abl_manifest, abl_flags, abl_out, abl_json); };
    });

    // conv-cost
    auto* cost = app.add_subcommand("conv-cost", "Analytic MAC counts for standard vs separable convolution");
    int cost_dk = 3, cost_m = 16, cost_n = 32, cost_df = 8;
    JsonOut cost_json;
    cost->add_option("--dk", cost_dk, "Kernel size D_K")->required();
    cost->add_option("--m", cost_m, "Input channels M")->required();
    cost->add_option("--n", cost_n, "Output channels N")->required();
    cost->add_option("--df", cost_df, "Feature map size D_F")->required();
    add_json_flags(cost, cost_json);
    cost->callback([&] {
        action = [&] { return run_conv_cost(cost_dk, cost_m, cost_n, cost_df, cost_json); };
    });

    // data-stats
    auto* stats = app.add_subcommand("data-stats", "Manifest load report and dataset statistics");
    std::string stats_manifest;
    JsonOut stats_json;
    stats->add_option("--manifest", stats_manifest, "Dataset manifest")->required();
    add_json_flags(stats, stats_json);
    stats->callback([&] {
        action = [&] { return run_data_stats(stats_manifest, stats_json); };
    });

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic screenshot corpus");
    std::size_t gen_n = 64;
    std::uint64_t gen_seed = 1234;
    std::string gen_out, gen_format = "csv";
    int gen_size = 64;
    double gen_noise = 0.1;
    JsonOut gen_json;
    gen->add_option("--n", gen_n, "Sample count")->capture_default_str();
    gen->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--image-size", gen_size, "Square image size in pixels")->capture_default_str();
    gen->add_option("--noise", gen_noise, "Uniform rating noise half-width; 0 disables")->capture_default_str();
    gen->add_option("--format", gen_format, "Manifest format: csv or jsonl")->capture_default_str();
    add_json_flags(gen, gen_json);
    gen->callback([&] {
        action = [&] { return run_gen_synthetic(gen_n, gen_seed, gen_out, gen_size, gen_noise, gen_format, gen_json); };
    });

    // distill-demo
    auto* distill = app.add_subcommand("distill-demo", "Teacher-to-student distillation toy experiment");
    std::uint64_t dd_seed = 1234;
    int dd_steps = 40;
    std::string dd_out = "distill_curve.csv";
    JsonOut dd_json;
    distill->add_option("--seed", dd_seed, "RNG seed")->capture_default_str();
    distill->add_option("--steps", dd_steps, "Optimization steps")->capture_default_str();
    distill->add_option("--out", dd_out, "Loss curve CSV path")->capture_default_str();
    add_json_flags(distill, dd_json);
    distill->callback([&] {
        action = [&] { return run_distill_demo(dd_seed, dd_steps, dd_out, dd_json); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        return action ? action() : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
