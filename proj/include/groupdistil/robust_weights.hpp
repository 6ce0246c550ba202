// SPDX-License-Identifier: Apache-2.0
//
// Group weights on the probability simplex, updated by exponentiated
// gradient ascent one sampled domain at a time.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gdistil {

using DomainId = std::size_t;

struct EgConfig {
    double eta_w = 0.01;

    /// eta_w must be positive (zero is allowed only via allow_zero, for
    /// ablations that pin the weights).
    void validate(bool allow_zero = false) const;
};

/// Largest exponent eta_w * loss applied in one update; larger values are
/// clamped with a warning on stderr.
inline constexpr double kMaxEgExponent = 700.0;

class GroupWeights {
public:
    /// Every entry must be >= 0 and the sum must be 1 within 1e-12.
    explicit GroupWeights(std::vector<double> w);

    static GroupWeights uniform(std::size_t num_domains);

    std::size_t size() const { return w_.size(); }
    double operator[](DomainId d) const { return w_.at(d); }
    std::span<const double> values() const { return w_; }

    friend bool operator==(const GroupWeights&, const GroupWeights&) = default;

private:
    struct Unchecked {};
    GroupWeights(std::vector<double> w, Unchecked) : w_(std::move(w)) {}
    friend GroupWeights eg_update(const GroupWeights&, DomainId, double, const EgConfig&);

    std::vector<double> w_;
};

/// All entries 1 / num_domains. Throws ConfigError when num_domains == 0.
GroupWeights init_uniform(std::size_t num_domains);

/// Multiplies entry d by exp(eta_w * loss) and renormalizes.
GroupWeights eg_update(const GroupWeights& w, DomainId d, double loss, const EgConfig& cfg);

std::vector<double> snapshot(const GroupWeights& w);

}  // namespace gdistil
