#include "uirate/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace uirate {

static_assert(std::endian::native == std::endian::little, "checkpoint blob assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'U', 'R', 'C', 'P'};

json metrics_to_json(const MetricsReport& m) {
    return json::parse(m.to_json());
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport m;
    m.n = j.at("n").get<std::size_t>();
    m.mae = j.at("mae").get<double>();
    m.mse = j.at("mse").get<double>();
    m.rmse = j.at("rmse").get<double>();
    if (j.at("r2").is_number()) m.r2 = j.at("r2").get<double>();
    if (j.at("pearson_r").is_number()) m.pearson_r = j.at("pearson_r").get<double>();
    m.clamped = j.at("clamped").get<bool>();
    return m;
}

json epoch_to_json(const EpochRecord& rec) {
    json j;
    j["epoch"] = rec.epoch;
    j["train_loss"] = rec.train_loss;
    j["train"] = metrics_to_json(rec.train);
    j["val"] = rec.has_val ? metrics_to_json(rec.val) : json(nullptr);
    return j;
}

EpochRecord epoch_from_json(const json& j) {
    EpochRecord rec;
    rec.epoch = j.at("epoch").get<int>();
    rec.train_loss = j.at("train_loss").get<double>();
    rec.train = metrics_from_json(j.at("train"));
    rec.has_val = !j.at("val").is_null();
    if (rec.has_val) rec.val = metrics_from_json(j.at("val"));
    return rec;
}

void require_keys(const json& j, const std::set<std::string>& keys, const char* where) {
    for (const auto& k : keys) {
        if (!j.contains(k)) throw std::runtime_error(std::string("checkpoint header: missing key '") + k + "' in " + where);
    }
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (!keys.count(k)) throw std::runtime_error(std::string("checkpoint header: unknown key '") + k + "' in " + where);
    }
}

void append_doubles(std::string& blob, const std::vector<double>& v) {
    const std::size_t off = blob.size();
    blob.resize(off + v.size() * sizeof(double));
    std::memcpy(blob.data() + off, v.data(), v.size() * sizeof(double));
}

std::vector<double> take_doubles(const std::string& blob, std::size_t& cursor, std::size_t count) {
    const std::size_t bytes = count * sizeof(double);
    if (cursor + bytes > blob.size()) throw std::runtime_error("checkpoint blob: truncated tensor data");
    std::vector<double> out(count);
    std::memcpy(out.data(), blob.data() + cursor, bytes);
    cursor += bytes;
    return out;
}

NamedParams snapshot_params(const RatingModel& model) {
    NamedParams out;
    for (const auto& [name, t] : model.parameters()) {
        out.emplace_back(name, Tensor::from_vector(t.shape(), t.values()));
    }
    return out;
}

std::string rng_state(std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

}  // namespace

Checkpoint make_checkpoint(RatingModel& model) {
    Checkpoint ck;
    ck.config = model.config();
    ck.vocab_tokens = model.vocab().id_to_token;
    ck.dropout_rng = rng_state(model.dropout_rng());
    ck.tensors = snapshot_params(model);
    return ck;
}

Checkpoint make_checkpoint(RatingModel& model, const Adam& adam, const TrainResult& result) {
    Checkpoint ck = make_checkpoint(model);
    ck.best_epoch = result.best_epoch;
    ck.best_mae = result.best_mae;
    ck.val_missing = result.val_missing;
    ck.history = result.history;
    ck.has_optimizer = true;
    ck.adam_t = adam.step_count();
    ck.slots = adam.slots();
    if (ck.slots.size() != ck.tensors.size()) {
        throw std::logic_error("make_checkpoint: optimizer slot count does not match parameter count");
    }
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    json header;
    header["config"] = json::parse(ck.config.to_json_string());
    header["vocab"] = ck.vocab_tokens;
    header["best_epoch"] = ck.best_epoch;
    header["best_mae"] = ck.best_mae;
    header["val_missing"] = ck.val_missing;
    header["dropout_rng"] = ck.dropout_rng;
    header["has_optimizer"] = ck.has_optimizer;
    header["adam_t"] = ck.adam_t;
    header["history"] = json::array();
    for (const auto& rec : ck.history) header["history"].push_back(epoch_to_json(rec));
    header["tensors"] = json::array();
    for (const auto& [name, t] : ck.tensors) {
        header["tensors"].push_back({{"name", name}, {"numel", t.numel()}});
    }

    std::string blob;
    for (const auto& [name, t] : ck.tensors) append_doubles(blob, t.values());
    if (ck.has_optimizer) {
        if (ck.slots.size() != ck.tensors.size()) {
            throw std::logic_error("save_checkpoint: slots misaligned with tensors");
        }
        for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
            const auto numel = static_cast<std::size_t>(ck.tensors[i].second.numel());
            // Lazily-allocated moments may still be empty for untouched
            // tensors; store explicit zeros so the layout stays fixed.
            std::vector<double> m = ck.slots[i].m, v = ck.slots[i].v;
            if (m.empty()) m.assign(numel, 0.0);
            if (v.empty()) v.assign(numel, 0.0);
            if (m.size() != numel || v.size() != numel) {
                throw std::logic_error("save_checkpoint: moment size mismatch for " + ck.tensors[i].first);
            }
            append_doubles(blob, m);
            append_doubles(blob, v);
        }
    }

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out.write(kMagic, 4);
    const std::uint32_t version = Checkpoint::kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (raw.size() < 16 || std::memcmp(raw.data(), kMagic, 4) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    std::uint32_t version = 0;
    std::memcpy(&version, raw.data() + 4, sizeof(version));
    if (version != Checkpoint::kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    }
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, raw.data() + 8, sizeof(header_len));
    if (16 + header_len > raw.size()) throw std::runtime_error("checkpoint header overruns file: " + path);

    const json header = json::parse(raw.substr(16, static_cast<std::size_t>(header_len)), nullptr, false);
    if (header.is_discarded()) throw std::runtime_error("checkpoint header is not valid JSON: " + path);
    require_keys(header,
                 {"config", "vocab", "best_epoch", "best_mae", "val_missing", "dropout_rng", "has_optimizer",
                  "adam_t", "history", "tensors"},
                 "top level");

    Checkpoint ck;
    ck.config = ModelConfig::from_json_string(header.at("config").dump());
    ck.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
    ck.best_epoch = header.at("best_epoch").get<int>();
    ck.best_mae = header.at("best_mae").get<double>();
    ck.val_missing = header.at("val_missing").get<bool>();
    ck.dropout_rng = header.at("dropout_rng").get<std::string>();
    ck.has_optimizer = header.at("has_optimizer").get<bool>();
    ck.adam_t = header.at("adam_t").get<std::uint64_t>();
    for (const auto& rec : header.at("history")) ck.history.push_back(epoch_from_json(rec));

    std::vector<std::pair<std::string, std::size_t>> entries;
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& te : header.at("tensors")) {
        require_keys(te, {"name", "numel"}, "tensors[]");
        auto name = te.at("name").get<std::string>();
        const auto numel = te.at("numel").get<std::size_t>();
        if (!seen.insert(name).second) throw std::runtime_error("checkpoint: duplicate tensor name " + name);
        total += numel;
        entries.emplace_back(std::move(name), numel);
    }

    const std::string blob = raw.substr(16 + static_cast<std::size_t>(header_len));
    const std::size_t expect = (ck.has_optimizer ? 3 * total : total) * sizeof(double);
    if (blob.size() != expect) {
        throw std::runtime_error("checkpoint blob size mismatch: expected " + std::to_string(expect) +
                                 " bytes, found " + std::to_string(blob.size()));
    }

    std::size_t cursor = 0;
    for (const auto& [name, numel] : entries) {
        auto values = take_doubles(blob, cursor, numel);
        ck.tensors.emplace_back(name, Tensor::from_vector({static_cast<int>(numel)}, std::move(values)));
    }
    if (ck.has_optimizer) {
        ck.slots.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            ck.slots[i].m = take_doubles(blob, cursor, entries[i].second);
            ck.slots[i].v = take_doubles(blob, cursor, entries[i].second);
        }
    }
    return ck;
}

void apply_checkpoint(const Checkpoint& ck, RatingModel& model) {
    NamedParams live = model.parameters();
    if (live.size() != ck.tensors.size()) {
        throw std::runtime_error("apply_checkpoint: model has " + std::to_string(live.size()) +
                                 " parameters, checkpoint has " + std::to_string(ck.tensors.size()));
    }
    // Model order is deterministic, so positional names must agree exactly;
    // this also catches any renamed or reordered layer.
    for (std::size_t i = 0; i < live.size(); ++i) {
        if (live[i].first != ck.tensors[i].first) {
            throw std::runtime_error("apply_checkpoint: parameter name mismatch at index " + std::to_string(i) +
                                     ": model '" + live[i].first + "' vs checkpoint '" + ck.tensors[i].first + "'");
        }
        auto& dst = live[i].second.values();
        const auto& src = ck.tensors[i].second.values();
        if (dst.size() != src.size()) {
            throw std::runtime_error("apply_checkpoint: size mismatch for " + live[i].first);
        }
        dst = src;
    }
    if (!ck.dropout_rng.empty()) {
        std::istringstream is(ck.dropout_rng);
        is >> model.dropout_rng();
        if (!is) throw std::runtime_error("apply_checkpoint: bad dropout RNG state");
    }
}

RatingModel model_from_checkpoint(const Checkpoint& ck) {
    RatingModel model(ck.config, Vocabulary::from_tokens(ck.vocab_tokens));
    apply_checkpoint(ck, model);
    return model;
}

Adam optimizer_from_checkpoint(const Checkpoint& ck, RatingModel& model) {
    if (!ck.has_optimizer) throw std::runtime_error("checkpoint carries no optimizer state");
    AdamParams hp;
    hp.lr = ck.config.learning_rate;
    Adam opt(model.parameters(), hp);
    if (opt.slots().size() != ck.slots.size()) {
        throw std::runtime_error("optimizer_from_checkpoint: slot count mismatch");
    }
    opt.slots() = ck.slots;
    opt.set_step_count(ck.adam_t);
    return opt;
}

}  // namespace uirate
