// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "support.hpp"

#include "groupdistil/error.hpp"
#include "groupdistil/losses.hpp"
#include "groupdistil/robust_weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace gdistil;
using gdistil::testing::random_distribution;
using gdistil::testing::random_labels;
using gdistil::testing::random_matrix;

TEST_CASE("softmax_tau examples") {
    const ProbBatch u = softmax_tau(Matrix{{0, 0, 0}}, 2.5);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(u(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    const ProbBatch p = softmax_tau(Matrix{{std::log(2.0), 0.0}}, 1.0);
    CHECK(p(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(p(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    const ProbBatch big = softmax_tau(Matrix{{1000, 1000}, {-1000, 1000}}, 1.0);
    CHECK(big(0, 0) == 0.5);
    CHECK(big(0, 1) == 0.5);
    CHECK(big(1, 1) == 1.0);
    CHECK(big.probs().all_finite());

    CHECK_THROWS_AS((void)softmax_tau(Matrix{{1, 2}}, 0.0), ConfigError);
    CHECK_THROWS_AS((void)softmax_tau(Matrix{{1, 2}}, -1.0), ConfigError);
}

TEST_CASE("softmax_tau is shift invariant") {
    // Dyadic logits and shift: every subtraction is exact, so the outputs are bit-identical.
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix z(1, 5);
        for (double& v : z.values()) {
            v = static_cast<double>(static_cast<long>(rng.uniform_index(257)) - 128) / 8.0;
        }
        Matrix shifted = z;
        for (double& v : shifted.values()) {
            v += 64.0;
        }
        CHECK(softmax_tau(z, 1.0).probs() == softmax_tau(shifted, 1.0).probs());
    }
    // Arbitrary logits and shifts agree to rounding.
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix z = random_matrix(1, 4, rng, 3.0);
        Matrix shifted = z;
        const double c = rng.normal(0.0, 10.0);
        for (double& v : shifted.values()) {
            v += c;
        }
        const ProbBatch a = softmax_tau(z, 2.0);
        const ProbBatch b = softmax_tau(shifted, 2.0);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(std::abs(a(0, k) - b(0, k)) < 1e-13);
        }
    }
}

TEST_CASE("softened entropy grows with tau toward uniform") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix z = random_matrix(1, 4, rng, 3.0);
        double prev = -1.0;
        for (double tau : {0.5, 1.0, 2.0, 4.0, 8.0, 32.0, 1e3}) {
            const double h = entropy(softmax_tau(z, tau));
            CHECK(h >= prev - 1e-15);
            prev = h;
        }
        const ProbBatch flat = softmax_tau(z, 1e9);
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(flat(0, c) == doctest::Approx(0.25).epsilon(1e-6));
        }
    }
}

TEST_CASE("ProbBatch enforces the simplex") {
    CHECK_NOTHROW(ProbBatch(Matrix{{0.3, 0.7}}));
    CHECK_THROWS(ProbBatch(Matrix{{0.3, 0.8}}));
    CHECK_THROWS(ProbBatch(Matrix{{-0.1, 1.1}}));
    CHECK_THROWS(ProbBatch(Matrix{{std::nan(""), 1.0}}));
}

TEST_CASE("cross_entropy examples") {
    const std::vector<int> zero{0};
    CHECK(cross_entropy(zero, ProbBatch(Matrix{{1.0, 0.0}})) <= -std::log1p(-kLogFloor));
    CHECK(cross_entropy(zero, ProbBatch(Matrix{{0.5, 0.5}})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const double h = cross_entropy(ProbBatch(Matrix{{0.5, 0.5}}), ProbBatch(Matrix{{0.25, 0.75}}));
    CHECK(h == doctest::Approx(0.836988216786).epsilon(1e-11));
    // A hard zero in the prediction stays finite through the log floor.
    const std::vector<int> one{1};
    CHECK(cross_entropy(one, ProbBatch(Matrix{{1.0, 0.0}})) == doctest::Approx(-std::log(kLogFloor)));
    CHECK_THROWS_AS((void)cross_entropy(ProbBatch(Matrix{{1.0, 0.0}}), ProbBatch(Matrix{{1.0, 0.0, 0.0}})),
                    ShapeError);
    const std::vector<int> two{0, 1};
    CHECK_THROWS_AS((void)cross_entropy(two, ProbBatch(Matrix{{1.0, 0.0}})), ShapeError);
}

TEST_CASE("kl_div examples") {
    CHECK(kl_div(ProbBatch(Matrix{{0.3, 0.7}}), ProbBatch(Matrix{{0.3, 0.7}})) == 0.0);
    CHECK(kl_div(ProbBatch(Matrix{{0.0, 1.0}}), ProbBatch(Matrix{{0.5, 0.5}})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(kl_div(ProbBatch(Matrix{{0.5, 0.5}}), ProbBatch(Matrix{{0.25, 0.75}})) ==
          doctest::Approx(0.143841036226).epsilon(1e-11));
    CHECK_THROWS_AS((void)kl_div(ProbBatch(Matrix{{1.0, 0.0}}), ProbBatch(Matrix{{1.0}})), ShapeError);
}

TEST_CASE("kl_div is non-negative and cross-entropy decomposes") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(5);
        const ProbBatch p(random_distribution(3, c, rng));
        const ProbBatch q(random_distribution(3, c, rng));
        const double kl = kl_div(p, q);
        CHECK(kl >= 0.0);
        CHECK(kl_div(p, p) == 0.0);
        CHECK(std::abs(cross_entropy(p, q) - (kl + entropy(p))) < 1e-12);
    }
}

TEST_CASE("kd_loss with alpha 0 is cross-entropy and ignores the teacher") {
    Rng rng(9);
    const Matrix z = random_matrix(5, 3, rng, 2.0);
    const std::vector<int> y = random_labels(5, 3, rng);
    const LossAndGrad a = kd_loss(y, z, ProbBatch(random_distribution(5, 3, rng)), {0.0, 4.0});
    const LossAndGrad b = kd_loss(y, z, ProbBatch(random_distribution(5, 3, rng)), {0.0, 1.0});
    CHECK(a.loss == cross_entropy(y, softmax_tau(z, 1.0)));
    CHECK(a.loss == b.loss);
    CHECK(a.grad == b.grad);
    CHECK(a.grad == ce_loss(y, z).grad);
}

TEST_CASE("kd_loss with alpha 1 and matched teacher is zero") {
    Rng rng(10);
    const Matrix z = random_matrix(4, 3, rng, 2.0);
    const std::vector<int> y = random_labels(4, 3, rng);
    for (double tau : {0.5, 1.0, 4.0, 10.0}) {
        const LossAndGrad lg = kd_loss(y, z, softmax_tau(z, tau), {1.0, tau});
        CHECK(lg.loss == 0.0);
        CHECK(lg.grad == Matrix(4, 3, 0.0));
    }
}

TEST_CASE("kd_loss at alpha 0.9 and tau 4 matches a direct evaluation") {
    // Reference from a 40-digit evaluation of
    // 0.1 * CE(y, softmax(z)) + 0.9 * 16 * KL(softmax(t / 4), softmax(z / 4)).
    const Matrix z{{1.0, -0.5, 2.0}, {0.3, 0.8, -1.2}};
    const Matrix t{{2.0, 0.1, -1.0}, {-0.4, 1.5, 0.2}};
    const std::vector<int> y{2, 1};
    const ProbBatch pt = softmax_tau(t, 4.0);
    CHECK(pt(0, 0) == doctest::Approx(0.47749754404109850067).epsilon(1e-15));
    CHECK(pt(1, 2) == doctest::Approx(0.30819123398560549957).epsilon(1e-15));

    const LossAndGrad lg = kd_loss(y, z, pt, {0.9, 4.0});
    CHECK(std::abs(lg.loss - 0.87798497823324164849) < 1e-12);
    CHECK(std::abs(cross_entropy(y, softmax_tau(z, 1.0)) - 0.46324797574733676109) < 1e-12);
    CHECK(std::abs(kl_div(pt, softmax_tau(z, 4.0)) - 0.057754179212396386971) < 1e-12);
}

TEST_CASE("kd_loss gradient matches central differences in the logits") {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(4);
        const std::size_t c = 2 + rng.uniform_index(4);
        const Matrix z = random_matrix(n, c, rng, 2.0);
        const std::vector<int> y = random_labels(n, c, rng);
        const double tau = 0.5 + 5.0 * rng.uniform01();
        const KdConfig cfg{rng.uniform01(), tau};
        const ProbBatch pt = softmax_tau(random_matrix(n, c, rng, 2.0), tau);

        const LossAndGrad lg = kd_loss(y, z, pt, cfg);
        const double eps = 1e-5;
        for (std::size_t i = 0; i < z.size(); ++i) {
            Matrix plus = z;
            Matrix minus = z;
            plus.values()[i] += eps;
            minus.values()[i] -= eps;
            const double fd = (kd_loss(y, plus, pt, cfg).loss - kd_loss(y, minus, pt, cfg).loss) / (2 * eps);
            const double a = lg.grad.values()[i];
            worst = std::max(worst, std::abs(a - fd) / std::max(1e-12, std::abs(a) + std::abs(fd)));
        }
    }
    CHECK(worst < 1e-7);
}

TEST_CASE("one-hot teacher at tau 1 reduces kd_loss to cross-entropy for every alpha") {
    Rng rng(55);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(6);
        const std::size_t c = 2 + rng.uniform_index(4);
        const Matrix z = random_matrix(n, c, rng, 3.0);
        const std::vector<int> y = random_labels(n, c, rng);
        const double alpha = trial < 3 ? 0.5 * trial : rng.uniform01();
        const LossAndGrad kd = kd_loss(y, z, one_hot(y, c), {alpha, 1.0});
        const LossAndGrad ce = ce_loss(y, z);
        CHECK(std::abs(kd.loss - cross_entropy(y, softmax_tau(z, 1.0))) < 1e-12);
        for (std::size_t i = 0; i < z.size(); ++i) {
            CHECK(std::abs(kd.grad.values()[i] - ce.grad.values()[i]) < 1e-12);
        }
    }
}

TEST_CASE("kd_loss validates its inputs") {
    const Matrix z{{0.1, 0.2}};
    const std::vector<int> y{1};
    const ProbBatch pt(Matrix{{0.5, 0.5}});
    CHECK_THROWS_AS((void)kd_loss(y, z, pt, {1.5, 4.0}), ConfigError);
    CHECK_THROWS_AS((void)kd_loss(y, z, pt, {-0.1, 4.0}), ConfigError);
    CHECK_THROWS_AS((void)kd_loss(y, z, pt, {0.5, 0.0}), ConfigError);
    CHECK_THROWS_AS((void)kd_loss(y, z, ProbBatch(Matrix{{0.2, 0.3, 0.5}}), {0.5, 4.0}), ShapeError);
    const std::vector<int> bad{2};
    CHECK_THROWS_AS((void)kd_loss(bad, z, pt, {0.5, 4.0}), ShapeError);
}

TEST_CASE("group_distil_loss examples") {
    CHECK(group_distil_loss({{1, 1, 1, 1}, {5, 5, 5, 5}}, GroupWeights::uniform(4)).value == 1.0);
    CHECK(group_distil_loss({{3.5, 2, 1, 9}, {5, 5, 5, 5}}, GroupWeights({1, 0, 0, 0})).value == 3.5);
    const GroupObjective o = group_distil_loss({{4, 3, 2, 1}, {5, 5, 5, 5}}, GroupWeights({0.1, 0.2, 0.3, 0.4}));
    CHECK(o.value == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(o.empty_groups.empty());

    const GroupObjective e = group_distil_loss({{4, 3, 2, 1}, {5, 0, 5, 5}}, GroupWeights({0.1, 0.2, 0.3, 0.4}));
    CHECK(e.value == doctest::Approx(0.4 + 0.6 + 0.4).epsilon(1e-15));
    CHECK(e.empty_groups == std::vector<std::size_t>{1});

    CHECK_THROWS_AS((void)group_distil_loss({{1, 1}, {1, 1}}, GroupWeights::uniform(3)), ShapeError);
}
