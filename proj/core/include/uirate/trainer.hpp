#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uirate/metrics.hpp"
#include "uirate/model.hpp"

namespace uirate {

struct AdamParams {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-tensor moment buffers; t is shared across the whole parameter set.
struct AdamSlot {
    std::vector<double> m, v;
};

// One bias-corrected update for a single flat tensor at time step t (1-based).
void adam_step(std::vector<double>& w, const std::vector<double>& grad, AdamSlot& slot,
               std::uint64_t t, const AdamParams& hp);

class Adam {
public:
    Adam(NamedParams params, AdamParams hp);

    // Consumes the gradients currently on the leaves, then clears them.
    // Parameters without a gradient this step keep moment decay semantics by
    // updating against a zero gradient.
    void step();
    void zero_grad();

    std::uint64_t step_count() const { return t_; }
    void set_step_count(std::uint64_t t) { t_ = t; }
    const NamedParams& params() const { return params_; }
    NamedParams& params() { return params_; }
    std::vector<AdamSlot>& slots() { return slots_; }
    const std::vector<AdamSlot>& slots() const { return slots_; }

private:
    NamedParams params_;
    AdamParams hp_;
    std::vector<AdamSlot> slots_;
    std::uint64_t t_ = 0;
};

// Scales every gradient in place so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_gradients(const NamedParams& params, double max_norm);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;  // mean optimization loss on the training scale
    MetricsReport train;      // raw-scale metrics
    bool has_val = false;
    MetricsReport val;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_mae = 0.0;      // validation MAE, or training MAE when no val split
    bool val_missing = false;   // empty validation split was flagged
};

struct TrainOptions {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    int epochs_override = 0;  // > 0 replaces cfg.epochs
    std::function<void(const EpochRecord&)> on_epoch;
    // Early stop: checked after each epoch's record; true ends training.
    std::function<bool(const EpochRecord&)> stop_when;
};

// Seeded-shuffle mini-batch loop: forward, loss, backward, global-norm clip,
// Adam. Preprocesses every referenced image once up front. The model is left
// holding the best-MAE epoch's weights.
TrainResult train_model(RatingModel& model, Adam& adam, const Manifest& manifest, const TrainOptions& opts,
                        std::mt19937_64& shuffle_rng);

// Convenience wrapper that builds the optimizer and shuffle stream from the
// model config.
TrainResult train_model(RatingModel& model, const Manifest& manifest, const TrainOptions& opts);

// Frozen evaluation over the given samples; predictions come back on the raw
// rating scale. clamp limits predictions to [1, 5] before scoring.
MetricsReport evaluate_model(RatingModel& model, const Manifest& manifest,
                             const std::vector<std::size_t>& idx, bool clamp = false);

// One row per epoch per split: epoch,split,loss,mae,mse,rmse,r2,pearson_r.
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

std::uint64_t shuffle_seed_of(std::uint64_t model_seed);

}  // namespace uirate
