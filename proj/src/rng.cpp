// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/rng.hpp"

#include <cmath>
#include <numbers>

namespace gdistil {

__extension__ using uint128 = unsigned __int128;

std::size_t Rng::uniform_index(std::size_t n) {
    const uint128 product = static_cast<uint128>(engine_()) * static_cast<uint128>(n);
    return static_cast<std::size_t>(product >> 64);
}

double Rng::normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer over a combination of both inputs
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace gdistil
