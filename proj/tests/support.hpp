// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance tests.
#pragma once

#include "groupdistil/matrix.hpp"
#include "groupdistil/mlp.hpp"
#include "groupdistil/rng.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace gdistil::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = rng.normal(0.0, sd);
    }
    return m;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t num_classes, Rng& rng) {
    std::vector<int> labels(n);
    for (int& y : labels) {
        y = static_cast<int>(rng.uniform_index(num_classes));
    }
    return labels;
}

/// Random Dirichlet(1)-like rows, strictly positive.
inline Matrix random_distribution(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) = -std::log(1.0 - rng.uniform01()) + 1e-3;
            sum += m(r, c);
        }
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) /= sum;
        }
    }
    return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("gdistil_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace gdistil::testing
