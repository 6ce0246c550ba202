// SPDX-License-Identifier: Apache-2.0

#include "groupdistil/data_synth.hpp"

#include "format.hpp"
#include "groupdistil/error.hpp"
#include "groupdistil/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace gdistil {

void GroupShiftSpec::validate() const {
    if (num_classes < 2) {
        throw ConfigError("num_classes must be at least 2");
    }
    if (num_spurious < 1) {
        throw ConfigError("num_spurious must be at least 1");
    }
    if (feature_dim < num_classes + num_spurious) {
        throw ConfigError("feature_dim must be at least num_classes + num_spurious");
    }
    if (!(core_margin >= 0.0) || !std::isfinite(core_margin)) {
        throw ConfigError("core_margin must be finite and non-negative");
    }
    if (!(spurious_margin >= 0.0) || !std::isfinite(spurious_margin)) {
        throw ConfigError("spurious_margin must be finite and non-negative");
    }
    if (!(noise_std > 0.0) || !std::isfinite(noise_std)) {
        throw ConfigError("noise_std must be positive");
    }
    if (train_group_proportions.size() != num_domains()) {
        throw ConfigError("train_group_proportions needs " + std::to_string(num_domains()) + " entries, got " +
                          std::to_string(train_group_proportions.size()));
    }
    double sum = 0.0;
    for (double p : train_group_proportions) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw ConfigError("train_group_proportions entries must be non-negative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("train_group_proportions must sum to 1 (got " + detail::format_double(sum) + ")");
    }
    if (n_train == 0) {
        throw ConfigError("n_train must be positive");
    }
    if (n_test_per_group == 0) {
        throw ConfigError("n_test_per_group must be positive");
    }
}

std::vector<std::size_t> Dataset::group_counts() const {
    std::vector<std::size_t> counts(by_domain.size());
    for (std::size_t d = 0; d < by_domain.size(); ++d) {
        counts[d] = by_domain[d].size();
    }
    return counts;
}

Dataset Dataset::from_parts(Matrix features, std::vector<int> labels, std::vector<DomainId> domains,
                            std::size_t num_classes, std::size_t num_spurious) {
    if (labels.size() != features.rows() || domains.size() != features.rows()) {
        throw DataError("dataset has " + std::to_string(features.rows()) + " rows, " + std::to_string(labels.size()) +
                        " labels and " + std::to_string(domains.size()) + " domains");
    }
    if (num_classes == 0 || num_spurious == 0) {
        throw DataError("dataset needs at least one class and one attribute value");
    }
    Dataset data;
    data.num_classes = num_classes;
    data.num_spurious = num_spurious;
    data.by_domain.resize(num_classes * num_spurious);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const DomainId d = domains[i];
        if (d >= data.by_domain.size()) {
            throw DataError("sample " + std::to_string(i) + " has domain " + std::to_string(d) + " outside [0, " +
                            std::to_string(data.by_domain.size()) + ")");
        }
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) != d / num_spurious) {
            throw DataError("sample " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                            " but domain " + std::to_string(d) + " implies label " + std::to_string(d / num_spurious));
        }
        data.by_domain[d].push_back(i);
    }
    data.features = std::move(features);
    data.labels = std::move(labels);
    data.domains = std::move(domains);
    return data;
}

std::vector<std::size_t> largest_remainder_counts(std::span<const double> proportions, std::size_t n) {
    std::vector<std::size_t> counts(proportions.size());
    std::vector<double> remainders(proportions.size());
    std::size_t assigned = 0;
    for (std::size_t d = 0; d < proportions.size(); ++d) {
        const double exact = proportions[d] * static_cast<double>(n);
        counts[d] = static_cast<std::size_t>(std::floor(exact));
        remainders[d] = exact - static_cast<double>(counts[d]);
        assigned += counts[d];
    }
    std::vector<std::size_t> order(proportions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t k = 0; assigned < n && k < order.size(); ++k, ++assigned) {
        ++counts[order[k]];
    }
    return counts;
}

namespace {

void fill_group(Matrix& features, std::size_t first_row, std::size_t count, int label, std::size_t attribute,
                const GroupShiftSpec& spec, Rng& rng) {
    std::vector<double> mean(spec.feature_dim, 0.0);
    mean[static_cast<std::size_t>(label)] += spec.core_margin;
    mean[spec.num_classes + attribute] += spec.spurious_margin;
    for (std::size_t i = first_row; i < first_row + count; ++i) {
        auto row = features.row(i);
        for (std::size_t j = 0; j < spec.feature_dim; ++j) {
            row[j] = rng.normal(mean[j], spec.noise_std);
        }
    }
}

Dataset build_split(const GroupShiftSpec& spec, std::span<const std::size_t> counts, Rng& rng) {
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    Matrix features(total, spec.feature_dim);
    std::vector<int> labels;
    std::vector<DomainId> domains;
    labels.reserve(total);
    domains.reserve(total);
    std::size_t row = 0;
    for (DomainId d = 0; d < counts.size(); ++d) {
        const int label = static_cast<int>(d / spec.num_spurious);
        const std::size_t attribute = d % spec.num_spurious;
        fill_group(features, row, counts[d], label, attribute, spec, rng);
        labels.insert(labels.end(), counts[d], label);
        domains.insert(domains.end(), counts[d], d);
        row += counts[d];
    }
    return Dataset::from_parts(std::move(features), std::move(labels), std::move(domains), spec.num_classes,
                               spec.num_spurious);
}

}  // namespace

DataSplits generate(const GroupShiftSpec& spec) {
    spec.validate();
    const auto train_counts = largest_remainder_counts(spec.train_group_proportions, spec.n_train);
    for (std::size_t d = 0; d < train_counts.size(); ++d) {
        if (train_counts[d] == 0 && spec.train_group_proportions[d] > 0.0) {
            throw ConfigError("train_group_proportions: group " + std::to_string(d) + " has proportion " +
                              detail::format_double(spec.train_group_proportions[d]) +
                              " but rounds to zero samples with n_train = " + std::to_string(spec.n_train));
        }
    }
    const std::vector<std::size_t> test_counts(spec.num_domains(), spec.n_test_per_group);

    Rng train_rng(derive_seed(spec.seed, 0));
    Rng test_rng(derive_seed(spec.seed, 1));
    DataSplits splits{build_split(spec, train_counts, train_rng), build_split(spec, test_counts, test_rng)};
    return splits;
}

DomainId draw_domain(Rng& rng, std::size_t num_domains) {
    return rng.uniform_index(num_domains);
}

LabeledBatch take_rows(const Dataset& data, std::span<const std::size_t> indices) {
    LabeledBatch batch;
    batch.features = gather_rows(data.features, indices);
    batch.labels.reserve(indices.size());
    batch.domains.reserve(indices.size());
    for (std::size_t i : indices) {
        batch.labels.push_back(data.labels[i]);
        batch.domains.push_back(data.domains[i]);
    }
    if (!batch.domains.empty() &&
        std::all_of(batch.domains.begin(), batch.domains.end(), [&](DomainId d) { return d == batch.domains[0]; })) {
        batch.domain = batch.domains[0];
    }
    return batch;
}

LabeledBatch sample_domain_batch(const Dataset& data, DomainId d, std::size_t batch_size, Rng& rng) {
    if (d >= data.by_domain.size() || data.by_domain[d].empty()) {
        throw DataError("domain " + std::to_string(d) + " has no samples");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    const auto& pool = data.by_domain[d];
    std::vector<std::size_t> indices(batch_size);
    for (auto& idx : indices) {
        idx = pool[rng.uniform_index(pool.size())];
    }
    LabeledBatch batch = take_rows(data, indices);
    batch.domain = d;
    return batch;
}

LabeledBatch sample_pooled_batch(const Dataset& data, std::size_t batch_size, Rng& rng) {
    if (data.size() == 0) {
        throw DataError("cannot sample from an empty dataset");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    std::vector<std::size_t> indices(batch_size);
    for (auto& idx : indices) {
        idx = rng.uniform_index(data.size());
    }
    return take_rows(data, indices);
}

std::map<DomainId, std::vector<std::size_t>> split_by_domain(std::span<const DomainId> domains) {
    std::map<DomainId, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        out[domains[i]].push_back(i);
    }
    return out;
}

std::map<DomainId, std::vector<std::size_t>> split_by_domain(const LabeledBatch& batch) {
    return split_by_domain(std::span<const DomainId>(batch.domains));
}

std::map<DomainId, std::vector<std::size_t>> split_by_domain(const Dataset& data) {
    return split_by_domain(std::span<const DomainId>(data.domains));
}

void write_dataset(std::ostream& out, const Dataset& data) {
    out << data.size() << ',' << data.features.cols() << ',' << data.num_classes << ',' << data.num_spurious << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i] << ',' << data.domains[i];
        for (double v : data.features.row(i)) {
            out << ',' << detail::format_double(v);
        }
        out << '\n';
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    return fields;
}

template <class T>
T parse_number(const std::string& text, std::size_t line_no) {
    std::istringstream ss(text);
    T value{};
    ss >> value;
    if (ss.fail() || !ss.eof()) {
        throw DataError("line " + std::to_string(line_no) + ": cannot parse '" + text + "'");
    }
    return value;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("dataset file is empty");
    }
    const auto header = split_csv(line);
    if (header.size() != 4) {
        throw DataError("dataset header must be n,F,C,A");
    }
    const auto n = parse_number<std::size_t>(header[0], 1);
    const auto f = parse_number<std::size_t>(header[1], 1);
    const auto c = parse_number<std::size_t>(header[2], 1);
    const auto a = parse_number<std::size_t>(header[3], 1);

    Matrix features(n, f);
    std::vector<int> labels(n);
    std::vector<DomainId> domains(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) {
            throw DataError("dataset ends after " + std::to_string(i) + " of " + std::to_string(n) + " rows");
        }
        const auto fields = split_csv(line);
        if (fields.size() != f + 2) {
            throw DataError("line " + std::to_string(i + 2) + ": expected " + std::to_string(f + 2) + " fields");
        }
        labels[i] = parse_number<int>(fields[0], i + 2);
        domains[i] = parse_number<std::size_t>(fields[1], i + 2);
        for (std::size_t j = 0; j < f; ++j) {
            const std::string& text = fields[j + 2];
            char* end = nullptr;
            features(i, j) = std::strtod(text.c_str(), &end);
            if (text.empty() || end != text.c_str() + text.size()) {
                throw DataError("line " + std::to_string(i + 2) + ": cannot parse '" + text + "'");
            }
        }
    }
    if (!features.all_finite()) {
        throw DataError("dataset contains non-finite feature values");
    }
    return Dataset::from_parts(std::move(features), std::move(labels), std::move(domains), c, a);
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    write_dataset(out, data);
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return read_dataset(in);
}

}  // namespace gdistil
