// SPDX-License-Identifier: Apache-2.0
//
// Softened softmax, cross-entropy, KL divergence and the distillation
// objectives. Every loss is the arithmetic mean over the batch; gradients
// carry the matching 1/n factor. Logarithms see max(p, kLogFloor) but stored
// probabilities are never modified.

#pragma once

#include "groupdistil/matrix.hpp"
#include "groupdistil/mlp.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace gdistil {

class GroupWeights;

inline constexpr double kLogFloor = 1e-12;

/// Row-stochastic matrix: entries in [0, 1], rows summing to 1 within 1e-9.
class ProbBatch {
public:
    /// Validates the simplex invariant on every row.
    explicit ProbBatch(Matrix probs);

    const Matrix& probs() const { return probs_; }
    std::size_t rows() const { return probs_.rows(); }
    std::size_t cols() const { return probs_.cols(); }
    double operator()(std::size_t r, std::size_t c) const { return probs_(r, c); }

private:
    struct Trusted {};
    ProbBatch(Matrix probs, Trusted) : probs_(std::move(probs)) {}
    friend ProbBatch softmax_tau(const Matrix& logits, double tau);
    friend ProbBatch one_hot(std::span<const int> labels, std::size_t num_classes);

    Matrix probs_;
};

struct KdConfig {
    double alpha = 0.9;
    double tau = 4.0;

    void validate() const;
};

ProbBatch softmax_tau(const Matrix& logits, double tau);
ProbBatch one_hot(std::span<const int> labels, std::size_t num_classes);

/// Mean over rows of -sum_c p_c log q_c.
double cross_entropy(const ProbBatch& target, const ProbBatch& pred);
double cross_entropy(std::span<const int> labels, const ProbBatch& pred);

/// Mean over rows of sum_c p_c log(p_c / q_c), with 0 log 0 = 0.
double kl_div(const ProbBatch& p, const ProbBatch& q);

/// Mean over rows of -sum_c p_c log p_c.
double entropy(const ProbBatch& p);

/// Plain cross-entropy on raw logits with its batch-mean gradient.
LossAndGrad ce_loss(std::span<const int> labels, const Matrix& logits);

/// (1 - alpha) H(y, softmax(z_s)) + alpha tau^2 KL(p_t, softmax(z_s / tau)).
/// teacher_probs must already be softened at cfg.tau. For alpha == 0 the
/// teacher is not read.
LossAndGrad kd_loss(std::span<const int> labels, const Matrix& student_logits,
                    const ProbBatch& teacher_probs, const KdConfig& cfg);

/// Per-domain losses with the number of samples behind each one.
struct GroupLossVector {
    std::vector<double> losses;
    std::vector<std::size_t> counts;
};

struct GroupObjective {
    double value = 0.0;
    /// Domains with zero samples; they contribute nothing to value.
    std::vector<std::size_t> empty_groups;
};

/// sum_d w_d L_d.
GroupObjective group_distil_loss(const GroupLossVector& per_group, const GroupWeights& weights);

}  // namespace gdistil
