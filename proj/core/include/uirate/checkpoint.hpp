#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uirate/model.hpp"
#include "uirate/trainer.hpp"

namespace uirate {

// Frozen training snapshot. Tensor values are deep copies, so the source
// model can keep training without mutating a saved checkpoint.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    ModelConfig config;
    std::vector<std::string> vocab_tokens;
    int best_epoch = -1;
    double best_mae = 0.0;
    bool val_missing = false;
    std::string dropout_rng;  // mt19937_64 stream state
    bool has_optimizer = false;
    std::uint64_t adam_t = 0;
    std::vector<EpochRecord> history;
    NamedParams tensors;          // canonical parameter names, model order
    std::vector<AdamSlot> slots;  // aligned with tensors when has_optimizer
};

Checkpoint make_checkpoint(RatingModel& model);
Checkpoint make_checkpoint(RatingModel& model, const Adam& adam, const TrainResult& result);

// Container layout: "URCP" magic, u32 version, u64 header length, JSON
// header, then raw little-endian doubles (tensor values in header order,
// then per-tensor Adam m and v when optimizer state is present).
void save_checkpoint(const Checkpoint& ck, const std::string& path);
// Rejects unknown versions, unknown or missing header keys, and blob size
// mismatches.
Checkpoint load_checkpoint(const std::string& path);

// Copies tensor values into an existing model; the checkpoint names must
// equal the model's parameter names exactly (both directions).
void apply_checkpoint(const Checkpoint& ck, RatingModel& model);
// Builds the model from the stored config and vocabulary, then applies
// weights and the dropout stream state.
RatingModel model_from_checkpoint(const Checkpoint& ck);
// Rebuilds the optimizer with restored moments and step count.
Adam optimizer_from_checkpoint(const Checkpoint& ck, RatingModel& model);

}  // namespace uirate
