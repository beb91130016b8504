#include "uirate/distill.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "uirate/data.hpp"
#include "uirate/ops.hpp"
#include "uirate/rand.hpp"
#include "uirate/text_encoder.hpp"
#include "uirate/trainer.hpp"

namespace uirate {

void DistillWeights::validate() const {
    if (alpha_mlm < 0.0 || alpha_ce < 0.0 || alpha_cos < 0.0) {
        throw std::invalid_argument("DistillWeights: loss weights must be >= 0");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("DistillWeights: temperature must be > 0");
    }
}

Tensor mlm_loss(const Tensor& log_probs, const std::vector<int>& targets,
                const std::vector<int>& masked_positions, bool* empty_mask_flag) {
    if (log_probs.rank() != 2) throw std::invalid_argument("mlm_loss: log_probs must be [L, V]");
    const int len = log_probs.dim(0);
    const int vocab = log_probs.dim(1);
    if (static_cast<int>(targets.size()) != len) {
        throw std::invalid_argument("mlm_loss: targets length must match log_probs rows");
    }
    if (empty_mask_flag) *empty_mask_flag = masked_positions.empty();
    if (masked_positions.empty()) return Tensor::scalar(0.0);

    std::vector<std::pair<int, int>> picks;  // (flat index, row) per masked position
    picks.reserve(masked_positions.size());
    for (int p : masked_positions) {
        if (p < 0 || p >= len) throw std::invalid_argument("mlm_loss: masked position out of range");
        const int t = targets[static_cast<std::size_t>(p)];
        if (t < 0 || t >= vocab) throw std::invalid_argument("mlm_loss: target id out of range");
        picks.emplace_back(p * vocab + t, p);
    }

    const double inv = 1.0 / static_cast<double>(picks.size());
    double s = 0.0;
    for (const auto& [flat, pos] : picks) s += log_probs.values()[static_cast<std::size_t>(flat)];

    auto n = std::make_shared<detail::Node>();
    n->shape = {1};
    n->value = {-s * inv};
    n->parents = {log_probs.shared_node()};
    n->requires_grad = log_probs.requires_grad();
    n->op = "mlm_loss";
    check_finite(n->op, n->value);
    if (n->requires_grad) {
        detail::Node* px = n->parents[0].get();
        n->backward = [px, picks, inv](detail::Node& self) {
            auto& g = px->grad_buffer();
            for (const auto& [flat, pos] : picks) g[static_cast<std::size_t>(flat)] -= self.grad[0] * inv;
        };
    }
    return Tensor::wrap(std::move(n));
}

Tensor distill_ce_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("distill_ce_loss: temperature must be > 0");
    if (teacher_logits.shape() != student_logits.shape()) {
        throw std::invalid_argument("distill_ce_loss: shape mismatch " + shape_str(teacher_logits.shape()) +
                                    " vs " + shape_str(student_logits.shape()));
    }
    if (student_logits.rank() != 2) throw std::invalid_argument("distill_ce_loss: logits must be rank-2");
    const Tensor p = softmax_rows(teacher_logits.detached(), temperature);
    const Tensor lq = log_softmax_rows(student_logits, temperature);
    const double rows = static_cast<double>(student_logits.dim(0));
    return scale_shift(sum_all(mul(p, lq)), -1.0 / rows);
}

namespace {

// 1 - cos for one row pair; a zero norm on either side falls back to the
// constant 1 so the batch average stays differentiable elsewhere.
Tensor cosine_loss_row(const Tensor& s, const Tensor& t, bool* degenerate) {
    double ns2 = 0.0, nt2 = 0.0;
    for (double v : s.values()) ns2 += v * v;
    for (double v : t.values()) nt2 += v * v;
    if (ns2 == 0.0 || nt2 == 0.0) {
        if (degenerate) *degenerate = true;
        return Tensor::scalar(1.0);
    }
    Tensor denom = mul(sqrt(dot(s, s)), sqrt(dot(t, t)));
    Tensor cos = div(dot(s, t), denom);
    return scale_shift(cos, -1.0, 1.0);
}

}  // namespace

Tensor cosine_loss(const Tensor& h_s, const Tensor& h_t, bool* degenerate_flag) {
    if (h_s.shape() != h_t.shape()) {
        throw std::invalid_argument("cosine_loss: shape mismatch " + shape_str(h_s.shape()) +
                                    " vs " + shape_str(h_t.shape()));
    }
    if (degenerate_flag) *degenerate_flag = false;
    if (h_s.rank() == 1) return cosine_loss_row(h_s, h_t, degenerate_flag);
    if (h_s.rank() != 2) throw std::invalid_argument("cosine_loss: rank-1 or rank-2 tensors required");
    std::vector<Tensor> per_row;
    per_row.reserve(static_cast<std::size_t>(h_s.dim(0)));
    for (int r = 0; r < h_s.dim(0); ++r) {
        per_row.push_back(cosine_loss_row(row(h_s, r), row(h_t, r), degenerate_flag));
    }
    return mean_all(concat(per_row, 0));
}

Tensor triple_loss(const Tensor& mlm, const Tensor& ce, const Tensor& cos, const DistillWeights& w) {
    w.validate();
    return add(add(scale_shift(mlm, w.alpha_mlm), scale_shift(ce, w.alpha_ce)),
               scale_shift(cos, w.alpha_cos));
}

double triple_loss(double mlm, double ce, double cos, const DistillWeights& w) {
    w.validate();
    return w.alpha_mlm * mlm + w.alpha_ce * ce + w.alpha_cos * cos;
}

std::string DistillDemoReport::to_json(int indent) const {
    nlohmann::json j;
    j["initial_total"] = initial_total;
    j["final_total"] = final_total;
    j["steps"] = nlohmann::json::array();
    for (const auto& s : curve) {
        j["steps"].push_back({{"step", s.step}, {"total", s.total}, {"mlm", s.mlm}, {"ce", s.ce}, {"cos", s.cos}});
    }
    return j.dump(indent);
}

void DistillDemoReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "step,total,mlm,ce,cos\n";
    for (const auto& s : curve) {
        out << s.step << ',' << format_double(s.total) << ',' << format_double(s.mlm) << ','
            << format_double(s.ce) << ',' << format_double(s.cos) << '\n';
    }
}

namespace {

struct MlmHead {
    Tensor w, b;

    MlmHead(int dim, int vocab, std::mt19937_64& rng)
        : w(randn_param({dim, vocab}, dim, rng)), b(zeros_param({vocab})) {}

    Tensor logits(const Tensor& states) const { return linear(states, w, b); }
};

}  // namespace

DistillDemoReport run_distill_demo(std::uint64_t seed, int steps) {
    if (steps <= 0) throw std::invalid_argument("run_distill_demo: steps must be positive");

    // Tiny word list; the vocabulary adds the four reserved ids on top.
    std::string corpus;
    for (int i = 0; i < 20; ++i) corpus += "word" + std::to_string(i) + " ";
    Vocabulary vocab = Vocabulary::build({corpus});

    TextEncoderConfig teacher_cfg;
    teacher_cfg.vocab_size = vocab.size();
    teacher_cfg.embed_dim = 16;
    teacher_cfg.layers = 4;
    teacher_cfg.heads = 4;
    teacher_cfg.max_len = 8;
    teacher_cfg.out_dim = 16;
    TextEncoderConfig student_cfg = teacher_cfg;
    student_cfg.layers = 2;

    std::mt19937_64 init_rng(seed);
    TextEncoder teacher(teacher_cfg, init_rng);
    MlmHead teacher_head(teacher_cfg.embed_dim, vocab.size(), init_rng);
    TextEncoder student(student_cfg, init_rng);
    MlmHead student_head(student_cfg.embed_dim, vocab.size(), init_rng);

    NamedParams trainable;
    student.collect_parameters("student", trainable);
    trainable.emplace_back("student.mlm_w", student_head.w);
    trainable.emplace_back("student.mlm_b", student_head.b);

    AdamParams opt_params;
    opt_params.lr = 1e-2;
    Adam opt(trainable, opt_params);

    DistillWeights weights;  // paper coefficients, T = 2
    const int len = teacher_cfg.max_len;
    std::mt19937_64 data_rng(seed ^ 0xA0761D6478BD642Full);

    DistillDemoReport report;
    report.curve.reserve(static_cast<std::size_t>(steps));
    for (int step = 0; step < steps; ++step) {
        TokenRow clean;
        clean.ids.resize(static_cast<std::size_t>(len));
        clean.mask.assign(static_cast<std::size_t>(len), 1);
        for (auto& id : clean.ids) {
            id = 4 + static_cast<int>(uniform_below(data_rng, static_cast<std::uint64_t>(vocab.size() - 4)));
        }

        // ~15% corruption with at least one masked slot per row.
        std::vector<int> masked;
        TokenRow corrupted = clean;
        for (int p = 0; p < len; ++p) {
            if (unit_uniform(data_rng) < 0.15) {
                masked.push_back(p);
                corrupted.ids[static_cast<std::size_t>(p)] = Vocabulary::kMask;
            }
        }
        if (masked.empty()) {
            const int p = static_cast<int>(uniform_below(data_rng, static_cast<std::uint64_t>(len)));
            masked.push_back(p);
            corrupted.ids[static_cast<std::size_t>(p)] = Vocabulary::kMask;
        }

        Tensor student_states = student.contextual_states(corrupted);
        Tensor student_logits = student_head.logits(student_states);
        Tensor teacher_states = teacher.contextual_states(corrupted).detached();
        Tensor teacher_logits = teacher_head.logits(teacher_states).detached();

        Tensor mlm = mlm_loss(log_softmax_rows(student_logits), clean.ids, masked);
        Tensor ce = distill_ce_loss(teacher_logits, student_logits, weights.temperature);
        Tensor cos = cosine_loss(student_states, teacher_states);
        Tensor total = triple_loss(mlm, ce, cos, weights);

        DistillDemoStep rec;
        rec.step = step;
        rec.total = total.item();
        rec.mlm = mlm.item();
        rec.ce = ce.item();
        rec.cos = cos.item();
        report.curve.push_back(rec);

        total.backward();
        clip_gradients(opt.params(), 1.0);
        opt.step();
    }

    report.initial_total = report.curve.front().total;
    report.final_total = report.curve.back().total;
    return report;
}

}  // namespace uirate
