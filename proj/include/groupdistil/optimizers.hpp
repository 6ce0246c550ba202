// SPDX-License-Identifier: Apache-2.0
//
// Parameter updates. `scale` is the active group weight: the gradient is
// multiplied by it before anything else, so under Adam the moments see the
// scaled gradient exactly as if the loss had been scaled.

#pragma once

#include "groupdistil/mlp.hpp"

#include <cstddef>
#include <string_view>
#include <vector>

namespace gdistil {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);

struct OptConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double eta_theta = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    /// eta_theta must be positive unless allow_zero_lr (frozen-run tests).
    void validate(bool allow_zero_lr = false) const;
};

struct OptState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::size_t step = 0;

    /// Empty for sgd; zero moments shaped like model for adam.
    static OptState fresh(const MlpParams& model, OptimizerKind kind);
};

/// theta - eta * scale * grad
MlpParams sgd_step(const MlpParams& params, const ParamGrads& grads, double scale, const OptConfig& cfg);

struct AdamResult {
    MlpParams params;
    OptState state;
};

AdamResult adam_step(const MlpParams& params, const ParamGrads& grads, double scale, const OptState& state,
                     const OptConfig& cfg);

/// Dispatches on cfg.kind, updating params and state in place.
void optimizer_step(MlpParams& params, const ParamGrads& grads, double scale, OptState& state,
                    const OptConfig& cfg);

}  // namespace gdistil
