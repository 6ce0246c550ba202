// SPDX-License-Identifier: Apache-2.0
//
// Seedable random stream with a portable, documented output sequence.
//
// The engine is std::mt19937_64, whose raw output is fixed by the C++
// standard. The std:: distributions are implementation-defined, so every
// derived variate is computed here from raw 64-bit words:
//   uniform01()      : (word >> 11) * 2^-53, in [0, 1); one word
//   uniform_index(n) : floor(word * n / 2^64) (multiply-high); one word
//   normal()         : Box-Muller cosine branch from two uniform01 draws,
//                      u1 mapped to (0, 1] as 1 - uniform01(); two words

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace gdistil {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [0, n). n must be >= 1.
    std::size_t uniform_index(std::size_t n);

    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream tag so that derived seeds are decorrelated.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace gdistil
