// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/optimizers.hpp"

#include "groupdistil/error.hpp"

#include <cmath>
#include <string>

namespace gdistil {

std::string_view to_string(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(std::string_view name) {
    if (name == "sgd") {
        return OptimizerKind::sgd;
    }
    if (name == "adam") {
        return OptimizerKind::adam;
    }
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void OptConfig::validate(bool allow_zero_lr) const {
    const bool lr_ok = allow_zero_lr ? eta_theta >= 0.0 : eta_theta > 0.0;
    if (!lr_ok || !std::isfinite(eta_theta)) {
        throw ConfigError("opt.eta_theta must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0)) {
        throw ConfigError("opt.beta1 must lie in [0, 1)");
    }
    if (!(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("opt.beta2 must lie in [0, 1)");
    }
    if (!(eps >= 0.0) || !std::isfinite(eps)) {
        throw ConfigError("opt.eps must be non-negative");
    }
}

OptState OptState::fresh(const MlpParams& model, OptimizerKind kind) {
    OptState state;
    if (kind == OptimizerKind::adam) {
        for (auto block : model.blocks()) {
            state.first_moment.emplace_back(block.size(), 0.0);
            state.second_moment.emplace_back(block.size(), 0.0);
        }
    }
    return state;
}

namespace {

void check_grads(const MlpParams& params, const ParamGrads& grads) {
    const auto p = params.blocks();
    const auto g = grads.blocks();
    if (p.size() != g.size()) {
        throw ShapeError("gradient has " + std::to_string(g.size() / 2) + " layers, model has " +
                         std::to_string(p.size() / 2));
    }
    for (std::size_t b = 0; b < p.size(); ++b) {
        if (p[b].size() != g[b].size()) {
            throw ShapeError("gradient block " + std::to_string(b) + " has " + std::to_string(g[b].size()) +
                             " entries, parameter has " + std::to_string(p[b].size()));
        }
    }
}

void check_finite(const MlpParams& params) {
    for (auto block : params.blocks()) {
        for (double v : block) {
            if (!std::isfinite(v)) {
                throw NumericError("optimizer step produced non-finite parameters");
            }
        }
    }
}

void sgd_inplace(MlpParams& params, const ParamGrads& grads, double scale, const OptConfig& cfg) {
    auto p = params.blocks();
    const auto g = grads.blocks();
    const double step = cfg.eta_theta * scale;
    for (std::size_t b = 0; b < p.size(); ++b) {
        for (std::size_t i = 0; i < p[b].size(); ++i) {
            p[b][i] -= step * g[b][i];
        }
    }
}

void adam_inplace(MlpParams& params, const ParamGrads& grads, double scale, OptState& state, const OptConfig& cfg) {
    auto p = params.blocks();
    const auto g = grads.blocks();
    if (state.first_moment.size() != p.size() || state.second_moment.size() != p.size()) {
        throw ShapeError("adam state does not match the model layers");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t b = 0; b < p.size(); ++b) {
        auto& m = state.first_moment[b];
        auto& v = state.second_moment[b];
        if (m.size() != p[b].size() || v.size() != p[b].size()) {
            throw ShapeError("adam state block " + std::to_string(b) + " does not match the parameter");
        }
        for (std::size_t i = 0; i < p[b].size(); ++i) {
            const double grad = scale * g[b][i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad * grad;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            const double denom = std::sqrt(v_hat) + cfg.eps;
            if (denom > 0.0) {
                p[b][i] -= cfg.eta_theta * m_hat / denom;
            }
        }
    }
}

}  // namespace

MlpParams sgd_step(const MlpParams& params, const ParamGrads& grads, double scale, const OptConfig& cfg) {
    check_grads(params, grads);
    MlpParams next = params;
    sgd_inplace(next, grads, scale, cfg);
    check_finite(next);
    return next;
}

AdamResult adam_step(const MlpParams& params, const ParamGrads& grads, double scale, const OptState& state,
                     const OptConfig& cfg) {
    check_grads(params, grads);
    AdamResult out{params, state};
    adam_inplace(out.params, grads, scale, out.state, cfg);
    check_finite(out.params);
    return out;
}

void optimizer_step(MlpParams& params, const ParamGrads& grads, double scale, OptState& state,
                    const OptConfig& cfg) {
    check_grads(params, grads);
    if (cfg.kind == OptimizerKind::sgd) {
        sgd_inplace(params, grads, scale, cfg);
    } else {
        adam_inplace(params, grads, scale, state, cfg);
    }
    check_finite(params);
}

}  // namespace gdistil
