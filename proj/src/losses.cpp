// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/losses.hpp"

#include "groupdistil/error.hpp"
#include "groupdistil/robust_weights.hpp"

#include <algorithm>
#include <cmath>

namespace gdistil {

namespace {

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shapes " + a.shape_string() + " and " + b.shape_string() + " differ");
    }
}

void require_labels(std::span<const int> labels, std::size_t rows, std::size_t num_classes, const char* what) {
    if (labels.size() != rows) {
        throw ShapeError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ShapeError(std::string(what) + ": label " + std::to_string(y) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        }
    }
}

/// (probs - onehot(labels)) / n
Matrix ce_gradient(std::span<const int> labels, const Matrix& probs) {
    const double n = static_cast<double>(probs.rows());
    Matrix grad(probs.rows(), probs.cols());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double y = static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0;
            grad(i, c) = (probs(i, c) - y) / n;
        }
    }
    return grad;
}

}  // namespace

ProbBatch::ProbBatch(Matrix probs) : probs_(std::move(probs)) {
    for (std::size_t i = 0; i < probs_.rows(); ++i) {
        double sum = 0.0;
        for (double p : probs_.row(i)) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw NumericError("probability row " + std::to_string(i) + " has an entry outside [0, 1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw NumericError("probability row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }
}

void KdConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("kd.alpha must lie in [0, 1]");
    }
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw ConfigError("kd.tau must be positive");
    }
}

ProbBatch softmax_tau(const Matrix& logits, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw ConfigError("softmax temperature must be positive");
    }
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto z = logits.row(i);
        auto p = out.row(i);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            p[c] = std::exp((z[c] - zmax) / tau);
            sum += p[c];
        }
        for (double& v : p) {
            v /= sum;
        }
    }
    return ProbBatch(std::move(out), ProbBatch::Trusted{});
}

ProbBatch one_hot(std::span<const int> labels, std::size_t num_classes) {
    require_labels(labels, labels.size(), num_classes, "one_hot");
    Matrix out(labels.size(), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return ProbBatch(std::move(out), ProbBatch::Trusted{});
}

double cross_entropy(const ProbBatch& target, const ProbBatch& pred) {
    require_same_shape(target.probs(), pred.probs(), "cross_entropy");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        double row = 0.0;
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            const double p = target(i, c);
            if (p > 0.0) {
                row -= p * safe_log(pred(i, c));
            }
        }
        total += row;
    }
    return total / static_cast<double>(pred.rows());
}

double cross_entropy(std::span<const int> labels, const ProbBatch& pred) {
    require_labels(labels, pred.rows(), pred.cols(), "cross_entropy");
    double total = 0.0;
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        total -= safe_log(pred(i, static_cast<std::size_t>(labels[i])));
    }
    return total / static_cast<double>(pred.rows());
}

double kl_div(const ProbBatch& p, const ProbBatch& q) {
    require_same_shape(p.probs(), q.probs(), "kl_div");
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double row = 0.0;
        for (std::size_t c = 0; c < p.cols(); ++c) {
            const double pc = p(i, c);
            if (pc > 0.0) {
                row += pc * (safe_log(pc) - safe_log(q(i, c)));
            }
        }
        total += row;
    }
    return total / static_cast<double>(p.rows());
}

double entropy(const ProbBatch& p) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        for (std::size_t c = 0; c < p.cols(); ++c) {
            const double pc = p(i, c);
            if (pc > 0.0) {
                total -= pc * safe_log(pc);
            }
        }
    }
    return total / static_cast<double>(p.rows());
}

LossAndGrad ce_loss(std::span<const int> labels, const Matrix& logits) {
    const ProbBatch probs = softmax_tau(logits, 1.0);
    LossAndGrad out;
    out.loss = cross_entropy(labels, probs);
    out.grad = ce_gradient(labels, probs.probs());
    return out;
}

LossAndGrad kd_loss(std::span<const int> labels, const Matrix& student_logits, const ProbBatch& teacher_probs,
                    const KdConfig& cfg) {
    cfg.validate();
    LossAndGrad out = ce_loss(labels, student_logits);
    const double alpha = cfg.alpha;
    if (alpha == 0.0) {
        return out;
    }
    require_same_shape(teacher_probs.probs(), student_logits, "kd_loss teacher");

    const double tau = cfg.tau;
    const ProbBatch soft = softmax_tau(student_logits, tau);
    const double kl = kl_div(teacher_probs, soft);
    out.loss = (1.0 - alpha) * out.loss + alpha * tau * tau * kl;

    const double n = static_cast<double>(student_logits.rows());
    auto g = out.grad.values();
    auto s = soft.probs().values();
    auto p = teacher_probs.probs().values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = (1.0 - alpha) * g[i] + alpha * tau * ((s[i] - p[i]) / n);
    }
    return out;
}

GroupObjective group_distil_loss(const GroupLossVector& per_group, const GroupWeights& weights) {
    if (per_group.losses.size() != weights.size() || per_group.counts.size() != weights.size()) {
        throw ShapeError("group_distil_loss: " + std::to_string(per_group.losses.size()) + " losses, " +
                         std::to_string(per_group.counts.size()) + " counts, " + std::to_string(weights.size()) +
                         " weights");
    }
    GroupObjective out;
    for (std::size_t d = 0; d < weights.size(); ++d) {
        if (per_group.counts[d] == 0) {
            out.empty_groups.push_back(d);
            continue;
        }
        if (!std::isfinite(per_group.losses[d])) {
            throw NumericError("group " + std::to_string(d) + " loss is not finite");
        }
        out.value += weights[d] * per_group.losses[d];
    }
    return out;
}

}  // namespace gdistil
