// SPDX-License-Identifier: Apache-2.0
//
// Synthetic sub-population shift benchmark. Each group is a (label,
// attribute) pair with domain id d = y * A + a. A sample from group (y, a) is
//
//     x = core_margin * e_y + spurious_margin * e_{C + a} + noise,
//
// with noise ~ N(0, noise_std^2 I) over all F coordinates. Training groups
// follow the configured proportions; the test split is balanced.

#pragma once

#include "groupdistil/matrix.hpp"
#include "groupdistil/robust_weights.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace gdistil {

class Rng;

struct GroupShiftSpec {
    std::size_t num_classes = 2;
    std::size_t num_spurious = 2;
    std::size_t feature_dim = 10;
    double core_margin = 2.0;
    double spurious_margin = 3.0;
    double noise_std = 1.0;
    /// Indexed by domain d = y * num_spurious + a.
    std::vector<double> train_group_proportions = {0.45, 0.05, 0.05, 0.45};
    std::size_t n_train = 2000;
    std::size_t n_test_per_group = 500;
    std::uint64_t seed = 0;

    std::size_t num_domains() const { return num_classes * num_spurious; }
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<DomainId> domains;
    std::size_t num_classes = 0;
    std::size_t num_spurious = 0;
    /// by_domain[d] lists the sample indices of domain d in increasing order.
    std::vector<std::vector<std::size_t>> by_domain;

    std::size_t size() const { return labels.size(); }
    std::size_t num_domains() const { return num_classes * num_spurious; }
    std::vector<std::size_t> group_counts() const;

    /// Builds a dataset and its per-domain index; checks d div A == label.
    static Dataset from_parts(Matrix features, std::vector<int> labels, std::vector<DomainId> domains,
                              std::size_t num_classes, std::size_t num_spurious);

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct LabeledBatch {
    Matrix features;
    std::vector<int> labels;
    std::vector<DomainId> domains;
    /// Set when every sample comes from one domain.
    std::optional<DomainId> domain;
};

struct DataSplits {
    Dataset train;
    Dataset test;
};

/// Group sizes for n samples by largest-remainder rounding (ties go to the
/// lower domain index).
std::vector<std::size_t> largest_remainder_counts(std::span<const double> proportions, std::size_t n);

DataSplits generate(const GroupShiftSpec& spec);

/// Uniform over [0, num_domains); consumes exactly one 64-bit draw.
DomainId draw_domain(Rng& rng, std::size_t num_domains);

/// batch_size draws with replacement from domain d.
LabeledBatch sample_domain_batch(const Dataset& data, DomainId d, std::size_t batch_size, Rng& rng);

/// batch_size draws with replacement from the whole dataset.
LabeledBatch sample_pooled_batch(const Dataset& data, std::size_t batch_size, Rng& rng);

LabeledBatch take_rows(const Dataset& data, std::span<const std::size_t> indices);

/// Indices per present domain; absent domains have no entry.
std::map<DomainId, std::vector<std::size_t>> split_by_domain(std::span<const DomainId> domains);
std::map<DomainId, std::vector<std::size_t>> split_by_domain(const LabeledBatch& batch);
std::map<DomainId, std::vector<std::size_t>> split_by_domain(const Dataset& data);

// Flat text format: header "n,F,C,A", then one "label,domain,f_1,...,f_F" row
// per sample with 17 significant digits.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace gdistil
