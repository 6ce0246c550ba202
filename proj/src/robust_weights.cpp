// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/robust_weights.hpp"

#include "groupdistil/error.hpp"

#include <cmath>
#include <iostream>
#include <string>

namespace gdistil {

void EgConfig::validate(bool allow_zero) const {
    const bool ok = allow_zero ? eta_w >= 0.0 : eta_w > 0.0;
    if (!ok || !std::isfinite(eta_w)) {
        throw ConfigError(allow_zero ? "eg.eta_w must be non-negative" : "eg.eta_w must be positive");
    }
}

GroupWeights::GroupWeights(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) {
        throw ConfigError("group weights need at least one domain");
    }
    double sum = 0.0;
    for (double v : w_) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError("group weights must be finite and non-negative");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ConfigError("group weights sum to " + std::to_string(sum) + ", not 1");
    }
}

GroupWeights GroupWeights::uniform(std::size_t num_domains) { return init_uniform(num_domains); }

GroupWeights init_uniform(std::size_t num_domains) {
    if (num_domains == 0) {
        throw ConfigError("number of domains must be at least 1");
    }
    return GroupWeights(std::vector<double>(num_domains, 1.0 / static_cast<double>(num_domains)));
}

GroupWeights eg_update(const GroupWeights& w, DomainId d, double loss, const EgConfig& cfg) {
    cfg.validate(/*allow_zero=*/true);
    if (d >= w.size()) {
        throw ConfigError("domain " + std::to_string(d) + " outside [0, " + std::to_string(w.size()) + ")");
    }
    if (!std::isfinite(loss)) {
        throw NumericError("group weight update received a non-finite loss for domain " + std::to_string(d));
    }

    double exponent = cfg.eta_w * loss;
    if (exponent > kMaxEgExponent || exponent < -kMaxEgExponent) {
        std::cerr << "warning: group weight exponent " << exponent << " for domain " << d << " clamped to +/-"
                  << kMaxEgExponent << "\n";
        exponent = exponent > 0.0 ? kMaxEgExponent : -kMaxEgExponent;
    }

    if (exponent == 0.0) {
        // Renormalizing an unchanged vector can still move entries by an ulp.
        return w;
    }
    std::vector<double> next(w.values().begin(), w.values().end());
    next[d] *= std::exp(exponent);
    double sum = 0.0;
    for (double v : next) {
        sum += v;
    }
    for (double& v : next) {
        v /= sum;
    }
    return GroupWeights(std::move(next), GroupWeights::Unchecked{});
}

std::vector<double> snapshot(const GroupWeights& w) { return {w.values().begin(), w.values().end()}; }

}  // namespace gdistil
