// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "support.hpp"

#include "groupdistil/data_synth.hpp"
#include "groupdistil/error.hpp"
#include "groupdistil/rng.hpp"
#include "groupdistil/trainers.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace gdistil;

namespace {

std::vector<double> domain_mean(const Dataset& data, DomainId d) {
    std::vector<double> mean(data.features.cols(), 0.0);
    for (std::size_t i : data.by_domain[d]) {
        for (std::size_t f = 0; f < mean.size(); ++f) {
            mean[f] += data.features(i, f);
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(data.by_domain[d].size());
    }
    return mean;
}

Dataset tiny_dataset() {
    // Domain 0 has three samples, domain 1 has one, domains 2 and 3 one each.
    Matrix x{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}};
    return Dataset::from_parts(x, {0, 0, 0, 0, 1, 1}, {0, 1, 0, 0, 2, 3}, 2, 2);
}

}  // namespace

TEST_CASE("largest-remainder group counts") {
    const std::vector<double> p{0.45, 0.05, 0.05, 0.45};
    CHECK(largest_remainder_counts(p, 1000) == std::vector<std::size_t>{450, 50, 50, 450});
    CHECK(largest_remainder_counts(p, 2000) == std::vector<std::size_t>{900, 100, 100, 900});
    const std::vector<double> thirds{1.0 / 3, 1.0 / 3, 1.0 / 3};
    CHECK(largest_remainder_counts(thirds, 10) == std::vector<std::size_t>{4, 3, 3});
    const std::vector<double> q{0.25, 0.25, 0.25, 0.25};
    CHECK(largest_remainder_counts(q, 7) == std::vector<std::size_t>{2, 2, 2, 1});
}

TEST_CASE("generate follows the configured counts") {
    GroupShiftSpec spec;
    spec.n_train = 1000;
    spec.n_test_per_group = 50;
    const DataSplits s = generate(spec);
    CHECK(s.train.group_counts() == std::vector<std::size_t>{450, 50, 50, 450});
    CHECK(s.test.group_counts() == std::vector<std::size_t>{50, 50, 50, 50});
    CHECK(s.train.features.rows() == 1000);
    CHECK(s.train.features.cols() == spec.feature_dim);
    for (std::size_t i = 0; i < s.train.size(); ++i) {
        CHECK(s.train.labels[i] == static_cast<int>(s.train.domains[i] / spec.num_spurious));
    }
    CHECK(s.train.features.all_finite());
}

TEST_CASE("group means sit on the core and spurious directions") {
    GroupShiftSpec spec;
    spec.n_test_per_group = 20000;
    const Dataset test = generate(spec).test;
    const double tol = 6.0 / std::sqrt(20000.0);
    for (DomainId d = 0; d < 4; ++d) {
        const std::size_t y = d / 2;
        const std::size_t a = d % 2;
        const std::vector<double> m = domain_mean(test, d);
        for (std::size_t f = 0; f < m.size(); ++f) {
            double expected = 0.0;
            if (f == y) {
                expected += spec.core_margin;
            }
            if (f == 2 + a) {
                expected += spec.spurious_margin;
            }
            CHECK(std::abs(m[f] - expected) < tol);
        }
    }
}

TEST_CASE("zero spurious margin makes groups within a class coincide") {
    GroupShiftSpec spec;
    spec.spurious_margin = 0.0;
    spec.n_test_per_group = 20000;
    const Dataset test = generate(spec).test;
    const double tol = 6.0 * std::sqrt(2.0 / 20000.0);
    for (std::size_t y = 0; y < 2; ++y) {
        const std::vector<double> m0 = domain_mean(test, 2 * y);
        const std::vector<double> m1 = domain_mean(test, 2 * y + 1);
        for (std::size_t f = 0; f < m0.size(); ++f) {
            CHECK(std::abs(m0[f] - m1[f]) < tol);
        }
    }
}

TEST_CASE("generate is deterministic in the seed") {
    GroupShiftSpec spec;
    const DataSplits a = generate(spec);
    const DataSplits b = generate(spec);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    spec.seed = 1;
    CHECK_FALSE(generate(spec).train == a.train);
}

TEST_CASE("spec validation names the field") {
    auto message_of = [](const GroupShiftSpec& s) {
        try {
            s.validate();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    GroupShiftSpec s;
    s.train_group_proportions = {0.5, 0.2, 0.2, 0.2};
    CHECK(message_of(s).find("train_group_proportions") != std::string::npos);
    s = {};
    s.train_group_proportions = {0.5, 0.5};
    CHECK(message_of(s).find("train_group_proportions") != std::string::npos);
    s = {};
    s.feature_dim = 3;
    CHECK(message_of(s).find("feature_dim") != std::string::npos);
    s = {};
    s.noise_std = 0.0;
    CHECK(message_of(s).find("noise_std") != std::string::npos);
    s = {};
    s.spurious_margin = -1.0;
    CHECK(message_of(s).find("spurious_margin") != std::string::npos);

    // 0.001 of 100 samples rounds to an empty group.
    s = {};
    s.n_train = 100;
    s.train_group_proportions = {0.499, 0.001, 0.25, 0.25};
    try {
        (void)generate(s);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("draw_domain is uniform and reproducible") {
    Rng one(1);
    for (int i = 0; i < 100; ++i) {
        CHECK(draw_domain(one, 1) == 0);
    }

    Rng rng(2024);
    const int n = 100000;
    std::vector<int> hits(4, 0);
    for (int i = 0; i < n; ++i) {
        ++hits[draw_domain(rng, 4)];
    }
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    for (int h : hits) {
        CHECK(std::abs(static_cast<double>(h) / n - 0.25) < 3 * sigma);
    }

    Rng a(9);
    Rng b(9);
    for (int i = 0; i < 50; ++i) {
        CHECK(draw_domain(a, 4) == draw_domain(b, 4));
    }
}

TEST_CASE("sample_domain_batch draws with replacement from one domain") {
    const Dataset data = tiny_dataset();
    Rng rng(3);
    const LabeledBatch single = sample_domain_batch(data, 1, 4, rng);
    CHECK(single.features.rows() == 4);
    for (std::size_t r = 0; r < 4; ++r) {
        CHECK(single.features(r, 0) == 1.0);
        CHECK(single.labels[r] == 0);
        CHECK(single.domains[r] == 1);
    }
    CHECK(single.domain == std::optional<DomainId>(1));

    GroupShiftSpec spec;
    const Dataset train = generate(spec).train;
    for (DomainId d = 0; d < 4; ++d) {
        const LabeledBatch b = sample_domain_batch(train, d, 128, rng);
        for (int y : b.labels) {
            CHECK(y == static_cast<int>(d / 2));
        }
    }

    Rng r1(17);
    Rng r2(17);
    CHECK(sample_domain_batch(train, 1, 64, r1).features == sample_domain_batch(train, 1, 64, r2).features);

    const Dataset gap = Dataset::from_parts(Matrix{{0.0}, {1.0}}, {0, 1}, {0, 3}, 2, 2);
    try {
        (void)sample_domain_batch(gap, 2, 4, rng);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("from_parts enforces the domain encoding") {
    CHECK_THROWS_AS(Dataset::from_parts(Matrix{{0.0}}, {1}, {0}, 2, 2), DataError);
    CHECK_THROWS_AS(Dataset::from_parts(Matrix{{0.0}}, {0}, {4}, 2, 2), DataError);
    CHECK_THROWS_AS(Dataset::from_parts(Matrix{{0.0}, {1.0}}, {0}, {0}, 2, 2), DataError);
}

TEST_CASE("split_by_domain partitions") {
    const Dataset data = tiny_dataset();
    Rng rng(4);
    const auto homogeneous = split_by_domain(sample_domain_batch(data, 0, 5, rng));
    CHECK(homogeneous.size() == 1);
    CHECK(homogeneous.at(0).size() == 5);

    GroupShiftSpec spec;
    spec.n_train = 1000;
    const Dataset train = generate(spec).train;
    const auto groups = split_by_domain(train);
    std::vector<std::size_t> sizes;
    std::set<std::size_t> seen;
    for (const auto& [d, idx] : groups) {
        sizes.push_back(idx.size());
        for (std::size_t i : idx) {
            CHECK(train.domains[i] == d);
            CHECK(seen.insert(i).second);
        }
    }
    CHECK(sizes == std::vector<std::size_t>{450, 50, 50, 450});
    CHECK(seen.size() == train.size());

    const std::vector<DomainId> sparse{3, 0, 3};
    const auto partial = split_by_domain(sparse);
    CHECK(partial.size() == 2);
    CHECK_FALSE(partial.contains(1));
    CHECK(partial.at(3) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("a linear probe on majority groups learns the shortcut") {
    GroupShiftSpec spec;
    const DataSplits s = generate(spec);
    std::vector<std::size_t> majority = s.train.by_domain[0];
    majority.insert(majority.end(), s.train.by_domain[3].begin(), s.train.by_domain[3].end());
    const LabeledBatch rows = take_rows(s.train, majority);
    const Dataset maj = Dataset::from_parts(rows.features, rows.labels, rows.domains, 2, 2);

    TrainConfig cfg;
    cfg.method = Method::erm;
    cfg.steps = 1500;
    cfg.batch_size = 128;
    cfg.opt.eta_theta = 1e-2;
    cfg.seed = 5;
    Rng rng(5);
    const std::vector<std::size_t> dims{spec.feature_dim, 2};
    const MlpParams probe = train_erm(init_mlp(dims, Activation::tanh, rng), maj, cfg).params;
    const Metrics m = evaluate(probe, s.test, spec.train_group_proportions);
    CHECK(m.per_group_accuracy[0] > 0.9);
    CHECK(m.per_group_accuracy[3] > 0.9);
    CHECK(m.per_group_accuracy[1] < 0.6);
    CHECK(m.per_group_accuracy[2] < 0.6);
}

TEST_CASE("dataset text format round-trips exactly") {
    GroupShiftSpec spec;
    spec.n_train = 200;
    spec.n_test_per_group = 5;
    const DataSplits s = generate(spec);
    std::stringstream buf;
    write_dataset(buf, s.train);
    const std::string text = buf.str();
    CHECK(text.rfind("200,10,2,2\n", 0) == 0);
    const Dataset back = read_dataset(buf);
    CHECK(back == s.train);

    testing::TempDir dir("data");
    save_dataset(dir.path() / "test.csv", s.test);
    CHECK(load_dataset(dir.path() / "test.csv") == s.test);

    std::stringstream bad("2,2,2,2\n0,0,1.0,abc\n1,3,0,0\n");
    CHECK_THROWS((void)read_dataset(bad));
    std::stringstream short_rows("3,1,2,2\n0,0,1.0\n");
    CHECK_THROWS((void)read_dataset(short_rows));
}
