#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uirate/tensor.hpp"

namespace uirate {

struct DistillWeights {
    double alpha_mlm = 2.0;
    double alpha_ce = 5.0;
    double alpha_cos = 1.0;
    double temperature = 2.0;

    void validate() const;
};

// Mean negative log-likelihood over the masked positions only.
// log_probs is [L, V] and already row-normalized. An empty mask set yields
// a constant 0 and raises empty_mask_flag instead of failing.
Tensor mlm_loss(const Tensor& log_probs, const std::vector<int>& targets,
                const std::vector<int>& masked_positions, bool* empty_mask_flag = nullptr);

// -sum(softmax(teacher/T) * log_softmax(student/T)) averaged over rows.
// Teacher logits are treated as constants; gradients flow to the student.
Tensor distill_ce_loss(const Tensor& teacher_logits, const Tensor& student_logits, double temperature);

// 1 - cosine(h_s, h_t) per row, averaged. A zero-norm row contributes a
// constant loss of 1 and raises degenerate_flag.
Tensor cosine_loss(const Tensor& h_s, const Tensor& h_t, bool* degenerate_flag = nullptr);

Tensor triple_loss(const Tensor& mlm, const Tensor& ce, const Tensor& cos, const DistillWeights& w);
double triple_loss(double mlm, double ce, double cos, const DistillWeights& w);

// Standalone teacher->student experiment: a frozen random 4-layer encoder
// teaches a 2-layer student on synthetic token streams with 15% masking.
struct DistillDemoStep {
    int step = 0;
    double total = 0.0, mlm = 0.0, ce = 0.0, cos = 0.0;
};

struct DistillDemoReport {
    std::vector<DistillDemoStep> curve;
    double initial_total = 0.0;
    double final_total = 0.0;

    std::string to_json(int indent = -1) const;
    void write_csv(const std::string& path) const;  // step,total,mlm,ce,cos
};

DistillDemoReport run_distill_demo(std::uint64_t seed, int steps = 40);

}  // namespace uirate
