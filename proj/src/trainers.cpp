// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/trainers.hpp"

#include "groupdistil/error.hpp"
#include "groupdistil/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gdistil {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::erm: return "erm";
        case Method::group_dro: return "group_dro";
        case Method::kd: return "kd";
        case Method::group_distil: return "group_distil";
    }
    return "unknown";
}

Method method_from_string(std::string_view name) {
    for (Method m : {Method::erm, Method::group_dro, Method::kd, Method::group_distil}) {
        if (name == to_string(m)) {
            return m;
        }
    }
    throw ConfigError("unknown method '" + std::string(name) + "' (expected erm, group_dro, kd or group_distil)");
}

void TrainConfig::validate() const {
    if (steps == 0) {
        throw ConfigError("steps must be at least 1");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (log_every == 0) {
        throw ConfigError("log_every must be positive");
    }
    kd.validate();
    eg.validate(/*allow_zero=*/true);
    opt.validate(/*allow_zero_lr=*/true);
}

std::size_t steps_for_epochs(std::size_t epochs, std::size_t n_train, std::size_t batch_size) {
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    return epochs * ((n_train + batch_size - 1) / batch_size);
}

ProbBatch MlpTeacher::soft_targets(const LabeledBatch& batch, double tau) const {
    return softmax_tau(predict_logits(model_, batch.features), tau);
}

ProbBatch OneHotOracleTeacher::soft_targets(const LabeledBatch& batch, double /*tau*/) const {
    return one_hot(batch.labels, num_classes_);
}

namespace {

enum class Sampling { pooled, by_domain };

using BatchLossFn = std::function<LossAndGrad(const LabeledBatch& batch, const Matrix& logits)>;

void require_nonempty_domains(const Dataset& train) {
    for (std::size_t d = 0; d < train.by_domain.size(); ++d) {
        if (train.by_domain[d].empty()) {
            throw DataError("training domain " + std::to_string(d) + " has no samples");
        }
    }
}

TrainResult run_loop(const MlpParams& init, const Dataset& train, const TrainConfig& cfg, Sampling sampling,
                     const BatchLossFn& loss_fn, const StepObserver& observer) {
    cfg.validate();
    if (train.features.cols() != init.input_dim()) {
        throw ConfigError("model expects " + std::to_string(init.input_dim()) + " features, dataset has " +
                          std::to_string(train.features.cols()));
    }
    if (train.num_classes != init.output_dim()) {
        throw ConfigError("model has " + std::to_string(init.output_dim()) + " outputs, dataset has " +
                          std::to_string(train.num_classes) + " classes");
    }
    if (sampling == Sampling::by_domain) {
        require_nonempty_domains(train);
    } else if (train.size() == 0) {
        throw DataError("training set is empty");
    }

    const std::size_t num_domains = train.num_domains();
    Rng rng(cfg.seed);
    MlpParams params = init;
    OptState state = OptState::fresh(params, cfg.opt.kind);
    GroupWeights weights = init_uniform(num_domains);

    TrainResult result{init, {}};
    RunRecord& record = result.record;
    record.config = cfg;
    record.seed = cfg.seed;
    record.rows.reserve(cfg.steps / cfg.log_every + 1);

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        try {
            long logged_domain = -1;
            LabeledBatch batch;
            DomainId d = 0;
            if (sampling == Sampling::by_domain) {
                d = draw_domain(rng, num_domains);
                batch = sample_domain_batch(train, d, cfg.batch_size, rng);
                logged_domain = static_cast<long>(d);
            } else {
                batch = sample_pooled_batch(train, cfg.batch_size, rng);
            }

            const ForwardResult fwd = forward(params, batch.features);
            const LossAndGrad lg = loss_fn(batch, fwd.logits);
            if (!std::isfinite(lg.loss)) {
                throw NumericError("non-finite loss");
            }

            double scale = 1.0;
            if (sampling == Sampling::by_domain) {
                weights = eg_update(weights, d, lg.loss, cfg.eg);
                scale = weights[d];
            }

            const ParamGrads grads = backward(params, fwd.cache, lg.grad);
            optimizer_step(params, grads, scale, state, cfg.opt);

            if (step % cfg.log_every == 0) {
                record.rows.push_back({step, logged_domain, lg.loss, snapshot(weights)});
            }
        } catch (const NumericError& e) {
            throw NumericError("step " + std::to_string(step) + ": " + e.what());
        }
        if (observer) {
            observer(step, params);
        }
    }
    result.params = std::move(params);
    return result;
}

void require_teacher_dims(const MlpParams& student, const Teacher& teacher) {
    if (teacher.num_classes() != student.output_dim()) {
        throw ConfigError("teacher has " + std::to_string(teacher.num_classes()) + " outputs, student has " +
                          std::to_string(student.output_dim()));
    }
}

BatchLossFn distillation_loss(const Teacher& teacher, const KdConfig& kd) {
    return [&teacher, kd](const LabeledBatch& batch, const Matrix& logits) {
        if (kd.alpha == 0.0) {
            return kd_loss(batch.labels, logits, ProbBatch(Matrix()), kd);
        }
        return kd_loss(batch.labels, logits, teacher.soft_targets(batch, kd.tau), kd);
    };
}

BatchLossFn cross_entropy_loss() {
    return [](const LabeledBatch& batch, const Matrix& logits) { return ce_loss(batch.labels, logits); };
}

template <class Fn>
TrainResult with_frozen_teacher(const MlpParams& teacher, Fn&& fn) {
    const std::uint64_t before = checksum(teacher);
    TrainResult result = fn(MlpTeacher(teacher));
    if (checksum(teacher) != before) {
        throw ContractError("teacher parameters changed during distillation");
    }
    return result;
}

}  // namespace

TrainResult train_erm(const MlpParams& init, const Dataset& train, const TrainConfig& cfg,
                      const StepObserver& observer) {
    return run_loop(init, train, cfg, Sampling::pooled, cross_entropy_loss(), observer);
}

TrainResult train_group_dro(const MlpParams& init, const Dataset& train, const TrainConfig& cfg,
                            const StepObserver& observer) {
    return run_loop(init, train, cfg, Sampling::by_domain, cross_entropy_loss(), observer);
}

TrainResult train_kd(const MlpParams& student_init, const Teacher& teacher, const Dataset& train,
                     const TrainConfig& cfg, const StepObserver& observer) {
    require_teacher_dims(student_init, teacher);
    return run_loop(student_init, train, cfg, Sampling::pooled, distillation_loss(teacher, cfg.kd), observer);
}

TrainResult train_kd(const MlpParams& student_init, const MlpParams& teacher, const Dataset& train,
                     const TrainConfig& cfg, const StepObserver& observer) {
    return with_frozen_teacher(teacher, [&](const MlpTeacher& t) {
        return train_kd(student_init, static_cast<const Teacher&>(t), train, cfg, observer);
    });
}

TrainResult train_group_distil(const MlpParams& student_init, const Teacher& teacher, const Dataset& train,
                               const TrainConfig& cfg, const StepObserver& observer) {
    require_teacher_dims(student_init, teacher);
    return run_loop(student_init, train, cfg, Sampling::by_domain, distillation_loss(teacher, cfg.kd), observer);
}

TrainResult train_group_distil(const MlpParams& student_init, const MlpParams& teacher, const Dataset& train,
                               const TrainConfig& cfg, const StepObserver& observer) {
    return with_frozen_teacher(teacher, [&](const MlpTeacher& t) {
        return train_group_distil(student_init, static_cast<const Teacher&>(t), train, cfg, observer);
    });
}

TrainResult train(const MlpParams& init, const Teacher* teacher, const Dataset& data, const TrainConfig& cfg,
                  const StepObserver& observer) {
    switch (cfg.method) {
        case Method::erm: return train_erm(init, data, cfg, observer);
        case Method::group_dro: return train_group_dro(init, data, cfg, observer);
        case Method::kd:
        case Method::group_distil:
            if (teacher == nullptr) {
                throw ConfigError(std::string(to_string(cfg.method)) + " requires a teacher");
            }
            return cfg.method == Method::kd ? train_kd(init, *teacher, data, cfg, observer)
                                            : train_group_distil(init, *teacher, data, cfg, observer);
    }
    throw ConfigError("unknown method");
}

std::vector<int> predict_labels(const MlpParams& model, const Matrix& features) {
    const Matrix logits = predict_logits(model, features);
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

Metrics metrics_from_predictions(std::span<const int> predicted, const Dataset& test,
                                 std::span<const double> train_group_proportions) {
    const std::size_t num_domains = test.num_domains();
    if (predicted.size() != test.size()) {
        throw ShapeError("got " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(test.size()) + " samples");
    }
    if (train_group_proportions.size() != num_domains) {
        throw ConfigError("train_group_proportions has " + std::to_string(train_group_proportions.size()) +
                          " entries for " + std::to_string(num_domains) + " domains");
    }
    Metrics m;
    m.per_group_accuracy.resize(num_domains);
    std::size_t total_correct = 0;
    for (std::size_t d = 0; d < num_domains; ++d) {
        const auto& idx = test.by_domain[d];
        if (idx.empty()) {
            throw MetricError("test group " + std::to_string(d) + " is empty; worst-group accuracy is undefined");
        }
        std::size_t correct = 0;
        for (std::size_t i : idx) {
            correct += predicted[i] == test.labels[i] ? 1 : 0;
        }
        total_correct += correct;
        m.per_group_accuracy[d] = static_cast<double>(correct) / static_cast<double>(idx.size());
        m.adjusted_average_accuracy += train_group_proportions[d] * m.per_group_accuracy[d];
    }
    m.worst_group_accuracy = *std::min_element(m.per_group_accuracy.begin(), m.per_group_accuracy.end());
    m.average_accuracy = static_cast<double>(total_correct) / static_cast<double>(test.size());
    return m;
}

Metrics evaluate(const MlpParams& model, const Dataset& test, std::span<const double> train_group_proportions) {
    if (test.size() == 0) {
        throw MetricError("test set is empty");
    }
    return metrics_from_predictions(predict_labels(model, test.features), test, train_group_proportions);
}

}  // namespace gdistil
