// SPDX-License-Identifier: Apache-2.0
//
// Training procedures and evaluation.
//
//   train_erm           pooled batches, cross-entropy (non-robust control)
//   train_group_dro     domain-sampled batches, cross-entropy, EG group weights
//   train_kd            pooled batches, distillation loss, frozen teacher
//   train_group_distil  domain-sampled batches, distillation loss, EG weights
//
// The two robust trainers run the same loop: draw a domain uniformly, sample
// a batch from it with replacement, compute the loss, update the group
// weight of that domain, then step the parameters scaled by the updated
// weight of that domain.

#pragma once

#include "groupdistil/data_synth.hpp"
#include "groupdistil/losses.hpp"
#include "groupdistil/mlp.hpp"
#include "groupdistil/optimizers.hpp"
#include "groupdistil/robust_weights.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace gdistil {

enum class Method { erm, group_dro, kd, group_distil };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

struct TrainConfig {
    Method method = Method::group_distil;
    std::size_t steps = 480;
    std::size_t batch_size = 128;
    KdConfig kd{};
    EgConfig eg{};
    OptConfig opt{};
    std::uint64_t seed = 0;
    std::size_t log_every = 1;

    void validate() const;
};

/// ceil(n_train / batch_size) steps make one epoch.
std::size_t steps_for_epochs(std::size_t epochs, std::size_t n_train, std::size_t batch_size);

struct Metrics {
    std::vector<double> per_group_accuracy;
    double worst_group_accuracy = 0.0;
    double average_accuracy = 0.0;
    double adjusted_average_accuracy = 0.0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Pooled batches log domain = -1.
struct LogRow {
    std::size_t step = 0;
    long domain = -1;
    double loss = 0.0;
    std::vector<double> weights;

    friend bool operator==(const LogRow&, const LogRow&) = default;
};

struct RunRecord {
    std::vector<LogRow> rows;
    std::optional<Metrics> metrics;
    TrainConfig config;
    std::uint64_t seed = 0;
};

struct TrainResult {
    MlpParams params;
    RunRecord record;
};

/// Produces the teacher's class distribution for a batch, softened at tau.
class Teacher {
public:
    virtual ~Teacher() = default;
    virtual std::size_t num_classes() const = 0;
    virtual ProbBatch soft_targets(const LabeledBatch& batch, double tau) const = 0;
};

/// softmax(f_T(x) / tau) of a fixed network.
class MlpTeacher final : public Teacher {
public:
    explicit MlpTeacher(const MlpParams& model) : model_(model) {}
    std::size_t num_classes() const override { return model_.output_dim(); }
    ProbBatch soft_targets(const LabeledBatch& batch, double tau) const override;
    const MlpParams& model() const { return model_; }

private:
    const MlpParams& model_;
};

/// Emits exact one-hot distributions of the true labels at any tau.
class OneHotOracleTeacher final : public Teacher {
public:
    explicit OneHotOracleTeacher(std::size_t num_classes) : num_classes_(num_classes) {}
    std::size_t num_classes() const override { return num_classes_; }
    ProbBatch soft_targets(const LabeledBatch& batch, double tau) const override;

private:
    std::size_t num_classes_;
};

/// Called after every parameter update with the 1-based step index.
using StepObserver = std::function<void(std::size_t step, const MlpParams& params)>;

TrainResult train_erm(const MlpParams& init, const Dataset& train, const TrainConfig& cfg,
                      const StepObserver& observer = {});
TrainResult train_group_dro(const MlpParams& init, const Dataset& train, const TrainConfig& cfg,
                            const StepObserver& observer = {});
TrainResult train_kd(const MlpParams& student_init, const Teacher& teacher, const Dataset& train,
                     const TrainConfig& cfg, const StepObserver& observer = {});
TrainResult train_kd(const MlpParams& student_init, const MlpParams& teacher, const Dataset& train,
                     const TrainConfig& cfg, const StepObserver& observer = {});
TrainResult train_group_distil(const MlpParams& student_init, const Teacher& teacher, const Dataset& train,
                               const TrainConfig& cfg, const StepObserver& observer = {});
TrainResult train_group_distil(const MlpParams& student_init, const MlpParams& teacher, const Dataset& train,
                               const TrainConfig& cfg, const StepObserver& observer = {});

/// Dispatches on cfg.method; teacher is required for kd and group_distil and
/// ignored otherwise.
TrainResult train(const MlpParams& init, const Teacher* teacher, const Dataset& train, const TrainConfig& cfg,
                  const StepObserver& observer = {});

/// Index of the largest logit per row (first wins on ties).
std::vector<int> predict_labels(const MlpParams& model, const Matrix& features);

/// Metrics from explicit per-sample correctness.
Metrics metrics_from_predictions(std::span<const int> predicted, const Dataset& test,
                                 std::span<const double> train_group_proportions);

Metrics evaluate(const MlpParams& model, const Dataset& test, std::span<const double> train_group_proportions);

}  // namespace gdistil
