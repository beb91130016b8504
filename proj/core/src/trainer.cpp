#include "uirate/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "uirate/image_io.hpp"
#include "uirate/ops.hpp"
#include "uirate/rand.hpp"

namespace uirate {

void adam_step(std::vector<double>& w, const std::vector<double>& grad, AdamSlot& slot,
               std::uint64_t t, const AdamParams& hp) {
    if (w.size() != grad.size()) throw std::invalid_argument("adam_step: weight/grad size mismatch");
    if (slot.m.empty()) slot.m.assign(w.size(), 0.0);
    if (slot.v.empty()) slot.v.assign(w.size(), 0.0);
    if (slot.m.size() != w.size() || slot.v.size() != w.size()) {
        throw std::invalid_argument("adam_step: moment state shape mismatch");
    }
    if (t < 1) throw std::invalid_argument("adam_step: step index is 1-based");
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
        slot.m[i] = hp.beta1 * slot.m[i] + (1.0 - hp.beta1) * grad[i];
        slot.v[i] = hp.beta2 * slot.v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
        const double mhat = slot.m[i] / c1;
        const double vhat = slot.v[i] / c2;
        w[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

Adam::Adam(NamedParams params, AdamParams hp) : params_(std::move(params)), hp_(hp) {
    slots_.resize(params_.size());
}

void Adam::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].second;
        auto& w = p.values();
        if (p.has_grad()) {
            adam_step(w, p.grad(), slots_[i], t_, hp_);
        } else {
            const std::vector<double> zeros(w.size(), 0.0);
            adam_step(w, zeros, slots_[i], t_, hp_);
        }
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

double clip_gradients(const NamedParams& params, double max_norm) {
    if (max_norm <= 0.0) throw std::invalid_argument("clip_gradients: max_norm must be positive");
    double sq = 0.0;
    for (const auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (const auto& [name, p] : params) {
            if (!p.has_grad()) continue;
            for (double& g : p.node()->grad) g *= scale;
        }
    }
    return norm;
}

std::uint64_t shuffle_seed_of(std::uint64_t model_seed) { return model_seed ^ 0xD1B54A32D192ED03ull; }

namespace {

struct SampleCache {
    std::unordered_map<std::size_t, Tensor> images;
    std::unordered_map<std::size_t, TokenRow> rows;

    void load(RatingModel& model, const Manifest& manifest, const std::vector<std::size_t>& idx) {
        const int size = model.config().image.input_size;
        for (std::size_t i : idx) {
            if (images.count(i)) continue;
            if (i >= manifest.samples.size()) throw std::invalid_argument("train: sample index out of range");
            const auto& s = manifest.samples[i];
            images.emplace(i, preprocess_image_file(s.image_path, size));
            rows.emplace(i, model.tokenize_sample(s));
        }
    }
};

MetricsReport evaluate_cached(RatingModel& model, const Manifest& manifest, SampleCache& cache,
                              const std::vector<std::size_t>& idx, bool clamp) {
    std::vector<double> y, yhat;
    y.reserve(idx.size());
    yhat.reserve(idx.size());
    for (std::size_t i : idx) {
        double p = target_to_raw(model.predict(cache.images.at(i), cache.rows.at(i), /*train_mode=*/false).item(),
                                 model.config().target_scale);
        if (clamp) p = std::clamp(p, 1.0, 5.0);
        yhat.push_back(p);
        y.push_back(manifest.samples[i].avg_rating);
    }
    MetricsReport r = evaluate(y, yhat);
    r.clamped = clamp;
    return r;
}

struct BestState {
    std::vector<std::vector<double>> weights;
    std::vector<AdamSlot> slots;
    std::uint64_t adam_t = 0;

    void capture(const Adam& adam) {
        weights.clear();
        for (const auto& [name, p] : adam.params()) weights.push_back(p.values());
        slots = adam.slots();
        adam_t = adam.step_count();
    }

    void restore(Adam& adam) const {
        auto& params = adam.params();
        for (std::size_t i = 0; i < params.size(); ++i) params[i].second.values() = weights[i];
        adam.slots() = slots;
        adam.set_step_count(adam_t);
    }
};

}  // namespace

TrainResult train_model(RatingModel& model, Adam& adam, const Manifest& manifest, const TrainOptions& opts,
                        std::mt19937_64& shuffle_rng) {
    const ModelConfig& cfg = model.config();
    if (opts.train_idx.empty()) throw std::invalid_argument("train: empty training split");
    const int epochs = opts.epochs_override > 0 ? opts.epochs_override : cfg.epochs;

    SampleCache cache;
    cache.load(model, manifest, opts.train_idx);
    cache.load(model, manifest, opts.val_idx);

    TrainResult result;
    result.val_missing = opts.val_idx.empty();
    BestState best;
    double best_mae = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order = opts.train_idx;
    const std::size_t n = order.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_below(shuffle_rng, i)]);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            std::vector<Tensor> losses;
            losses.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                const Tensor pred = model.predict(cache.images.at(i), cache.rows.at(i), /*train_mode=*/true);
                const double target = target_to_model(manifest.samples[i].avg_rating, cfg.target_scale);
                const Tensor err = sub(pred, Tensor::scalar(target));
                losses.push_back(cfg.loss == LossKind::Mse ? mul(err, err) : abs(err));
            }
            Tensor loss = mean_all(concat(losses, 0));
            const double lv = loss.item();
            if (!std::isfinite(lv)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch starting at sample " + std::to_string(start));
            }
            loss_sum += lv * static_cast<double>(stop - start);
            loss.backward();
            clip_gradients(adam.params(), cfg.grad_clip);
            adam.step();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train = evaluate_cached(model, manifest, cache, opts.train_idx, /*clamp=*/false);
        if (!opts.val_idx.empty()) {
            rec.has_val = true;
            rec.val = evaluate_cached(model, manifest, cache, opts.val_idx, /*clamp=*/false);
        }
        const double mae = rec.has_val ? rec.val.mae : rec.train.mae;
        if (mae < best_mae) {
            best_mae = mae;
            result.best_epoch = epoch;
            best.capture(adam);
        }
        result.history.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);
        if (opts.stop_when && opts.stop_when(rec)) break;
    }

    result.best_mae = best_mae;
    best.restore(adam);
    return result;
}

TrainResult train_model(RatingModel& model, const Manifest& manifest, const TrainOptions& opts) {
    AdamParams hp;
    hp.lr = model.config().learning_rate;
    Adam adam(model.parameters(), hp);
    std::mt19937_64 shuffle_rng(shuffle_seed_of(model.config().seed));
    return train_model(model, adam, manifest, opts, shuffle_rng);
}

MetricsReport evaluate_model(RatingModel& model, const Manifest& manifest,
                             const std::vector<std::size_t>& idx, bool clamp) {
    if (idx.size() < 2) throw std::invalid_argument("evaluate_model: need at least 2 samples");
    SampleCache cache;
    cache.load(model, manifest, idx);
    return evaluate_cached(model, manifest, cache, idx, clamp);
}

namespace {

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "undefined"; }

void write_row(std::ofstream& out, int epoch, const char* split, const std::string& loss,
               const MetricsReport& m) {
    out << epoch << ',' << split << ',' << loss << ',' << format_double(m.mae) << ','
        << format_double(m.mse) << ',' << format_double(m.rmse) << ',' << opt_str(m.r2) << ','
        << opt_str(m.pearson_r) << '\n';
}

}  // namespace

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
    out << "epoch,split,loss,mae,mse,rmse,r2,pearson_r\n";
    for (const auto& rec : history) {
        write_row(out, rec.epoch, "train", format_double(rec.train_loss), rec.train);
        // the optimization loss belongs to the training split only
        if (rec.has_val) write_row(out, rec.epoch, "val", "", rec.val);
    }
    if (!out) throw std::runtime_error("write_history_csv: write failed for " + path);
}

}  // namespace uirate
