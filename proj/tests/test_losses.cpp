#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairclust/common.hpp"
#include "fairclust/losses.hpp"

using namespace fairclust;

namespace {

std::vector<double> random_probs(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.02, 0.98);
    std::vector<double> q(n);
    for (auto& v : q) v = u(rng);
    return q;
}

std::vector<double> random_targets(std::mt19937_64& rng, std::size_t n) {
    std::bernoulli_distribution b(0.5);
    std::vector<double> t(n);
    t[0] = 1.0;
    for (std::size_t i = 1; i < n; ++i) t[i] = b(rng) ? 1.0 : 0.0;
    return t;
}

template <typename F>
std::vector<double> central_difference(F&& f, std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST(ConfusionCounts, HardThresholdExample) {
    const std::vector<double> q{1, 1, 0}, t{1, 0, 0};
    const auto c = confusion_counts(q, t, 0.5);
    EXPECT_DOUBLE_EQ(c.tp, 1.0);
    EXPECT_DOUBLE_EQ(c.fp, 1.0);
    EXPECT_DOUBLE_EQ(c.fn, 0.0);
    EXPECT_DOUBLE_EQ(c.tn, 1.0);
}

TEST(ConfusionCounts, PerfectPredictionHasNoErrors) {
    const std::vector<double> t{1, 0, 1, 1, 0};
    const std::vector<double> q{0.9, 0.1, 0.8, 0.95, 0.05};
    const auto c = confusion_counts(q, t, 0.5);
    EXPECT_EQ(c.fp, 0.0);
    EXPECT_EQ(c.fn, 0.0);
    EXPECT_EQ(c.tp, 3.0);
}

TEST(ConfusionCounts, SoftExample) {
    const std::vector<double> q{0.5, 0.5}, t{1, 0};
    const auto c = confusion_counts(q, t);
    EXPECT_DOUBLE_EQ(c.tp, 0.5);
    EXPECT_DOUBLE_EQ(c.fp, 0.5);
    EXPECT_DOUBLE_EQ(c.fn, 0.5);
}

TEST(ConfusionCounts, ComponentsSumToCountAndStayNonNegative) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto q = random_probs(rng, 12);
        const auto t = random_targets(rng, 12);
        for (auto c : {confusion_counts(q, t), confusion_counts(q, t, 0.5)}) {
            EXPECT_NEAR(c.tp + c.fp + c.fn + c.tn, 12.0, 1e-9);
            EXPECT_GE(c.tp, 0.0);
            EXPECT_GE(c.fp, -1e-12);
            EXPECT_GE(c.fn, -1e-12);
            EXPECT_GE(c.tn, -1e-12);
        }
    }
}

TEST(ConfusionCounts, SoftEqualsHardOnBinaryPredictions) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution b(0.5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> q(9);
        for (auto& v : q) v = b(rng) ? 1.0 : 0.0;
        const auto t = random_targets(rng, 9);
        const auto soft = confusion_counts(q, t);
        const auto hard = confusion_counts(q, t, 0.5);
        EXPECT_EQ(soft.tp, hard.tp);
        EXPECT_EQ(soft.fp, hard.fp);
        EXPECT_EQ(soft.fn, hard.fn);
    }
}

TEST(ConfusionCounts, RejectsMismatchedLengthsAndBadThreshold) {
    const std::vector<double> q{0.5, 0.5}, t{1};
    EXPECT_THROW(confusion_counts(q, t), DataError);
    const std::vector<double> t2{1, 0};
    EXPECT_THROW(confusion_counts(q, t2, 1.5), ConfigError);
}

TEST(FmiLoss, Examples) {
    EXPECT_DOUBLE_EQ(fmi_loss({1, 1, 0, 0}), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(fmi_loss({4, 0, 0, 2}), 0.0);
    EXPECT_DOUBLE_EQ(fmi_loss({0, 2, 1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(fmi_loss({0, 0, 0, 3}), 0.0);
}

TEST(FmiLoss, StaysInUnitInterval) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        const auto q = random_probs(rng, 10);
        const auto t = random_targets(rng, 10);
        const double l = fmi_loss(confusion_counts(q, t));
        EXPECT_GE(l, 0.0);
        EXPECT_LE(l, 1.0);
    }
}

TEST(FmiLoss, BoundsOneMinusIndex) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> count(0, 30);
    for (int trial = 0; trial < 2000; ++trial) {
        ConfusionCounts c{double(count(rng)), double(count(rng)), double(count(rng)), 0};
        if (c.tp + c.fp == 0 || c.tp + c.fn == 0) continue;
        EXPECT_LE(1.0 - fowlkes_mallows_index(c), fmi_loss(c) + 1e-15);
    }
}

TEST(FmiLossGrad, MatchesFiniteDifferences) {
    std::mt19937_64 rng(21);
    const auto q = random_probs(rng, 16);
    const auto t = random_targets(rng, 16);
    const auto g = fmi_loss_grad(q, t);
    const auto fd = central_difference([&](const std::vector<double>& x) { return fmi_loss(confusion_counts(x, t)); },
                                       q, 1e-6);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_LT(rel_err(g[i], fd[i]), 1e-6) << i;
}

// q = t = 1 is a minimum on the upper face of the box, not a stationary point.
// The derivative there is -1/(2n) per entry; it only points outside [0, 1].
TEST(FmiLossGrad, NoFeasibleDescentAtOptimum) {
    const std::vector<double> ones(6, 1.0);
    EXPECT_EQ(fmi_loss(confusion_counts(ones, ones)), 0.0);
    for (double v : fmi_loss_grad(ones, ones)) {
        EXPECT_LE(v, 0.0);
        EXPECT_NEAR(v, -1.0 / 12.0, 1e-15);
    }
}

TEST(FmiLossGrad, NonPositiveForPositiveTargets) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto q = random_probs(rng, 8);
        const auto t = random_targets(rng, 8);
        const auto g = fmi_loss_grad(q, t);
        for (std::size_t i = 0; i < q.size(); ++i)
            if (t[i] == 1.0) EXPECT_LE(g[i], 0.0);
    }
}

TEST(BceLoss, Examples) {
    const std::vector<double> t{1, 0, 1};
    const std::vector<double> near{1 - 1e-12, 1e-12, 1 - 1e-12};
    EXPECT_NEAR(bce_loss(near, t), 0.0, 1e-9);
    const std::vector<double> half(3, 0.5);
    EXPECT_NEAR(bce_loss(half, t), std::log(2.0), 1e-15);
}

TEST(BceLoss, MatchesSummationOracleAndGradient) {
    std::mt19937_64 rng(31);
    const auto q = random_probs(rng, 20);
    const auto t = random_targets(rng, 20);
    double oracle = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) oracle -= t[i] * std::log(q[i]) + (1 - t[i]) * std::log(1 - q[i]);
    oracle /= static_cast<double>(q.size());
    EXPECT_NEAR(bce_loss(q, t), oracle, 1e-12);

    const auto g = bce_loss_grad(q, t);
    const auto fd = central_difference([&](const std::vector<double>& x) { return bce_loss(x, t); }, q, 1e-6);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_LT(rel_err(g[i], fd[i]), 1e-6);
}

TEST(Purity, Examples) {
    const std::vector<double> t{1, 1, 1, 1, 1, 0, 0, 0};
    const std::vector<double> perfect{1, 1, 1, 1, 1, 0, 0, 0};
    EXPECT_DOUBLE_EQ(purity(perfect, t, 0.5).gamma, 1.0);
    const std::vector<double> all_pos(8, 0.9);
    EXPECT_DOUBLE_EQ(purity(all_pos, t, 0.5).gamma, 0.625);
    const std::vector<double> six_neg{0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
    EXPECT_DOUBLE_EQ(purity(six_neg, t, 0.5).gamma, 2.5);
    EXPECT_DOUBLE_EQ(purity(six_neg, t, 0.5, true).gamma, 1.0);
}

TEST(Purity, SoftMatchesOracleAndGradient) {
    std::mt19937_64 rng(41);
    const auto q = random_probs(rng, 12);
    const auto t = random_targets(rng, 12);
    double pos = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        pos += t[i];
        sq += q[i];
    }
    const auto p = purity(q, t);
    EXPECT_NEAR(p.gamma, pos / sq, 1e-14);
    EXPECT_NEAR(p.numerator, pos, 1e-14);
    EXPECT_NEAR(p.denominator, sq, 1e-12);

    const auto g = purity_grad(q, t);
    const auto fd = central_difference([&](const std::vector<double>& x) { return purity(x, t).gamma; }, q, 1e-6);
    for (std::size_t i = 0; i < q.size(); ++i) EXPECT_LT(rel_err(g[i], fd[i]), 1e-5);
}

TEST(Purity, DenominatorGuard) {
    const std::vector<double> q(4, 0.0), t{1, 0, 0, 0};
    const auto p = purity(q, t);
    EXPECT_TRUE(std::isfinite(p.gamma));
    EXPECT_DOUBLE_EQ(p.gamma, 1.0 / kPurityEpsilon);
}

TEST(FairnessLoss, Examples) {
    const std::vector<double> g{0.5, 1.0};
    EXPECT_DOUBLE_EQ(fairness_loss(g), 0.25);
    const std::vector<double> same(5, 0.7);
    EXPECT_DOUBLE_EQ(fairness_loss(same), 0.0);
    const std::vector<double> single{0.3};
    EXPECT_DOUBLE_EQ(fairness_loss(single), 0.0);
    EXPECT_DOUBLE_EQ(fairness_loss(g, {0.5, false}), 0.25);
    EXPECT_THROW(fairness_loss(std::vector<double>{}), ConfigError);
}

TEST(FairnessLoss, NonNegativeAndZeroOnlyWhenEqual) {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> g(6);
        for (auto& v : g) v = u(rng);
        EXPECT_GT(fairness_loss(g), 0.0);
    }
}

TEST(FairnessLoss, GradientMatchesFiniteDifferencesAwayFromKink) {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.2, 1.5);
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 50; ++trial) {
        std::vector<double> g(7);
        for (auto& v : g) v = u(rng);
        double mean = 0.0;
        for (double v : g) mean += v / 7.0;
        bool near_kink = false;
        for (double v : g) near_kink |= std::abs(v - mean) <= 1e-3;
        if (near_kink) continue;
        ++checked;
        for (bool detach : {false, true}) {
            const FairnessReference ref{std::nullopt, detach};
            const auto analytic = fairness_loss_grad(g, ref);
            std::vector<double> fd;
            if (detach) {
                // A detached reference is a constant during differentiation.
                fd = central_difference(
                    [&](const std::vector<double>& x) { return fairness_loss(x, {mean, false}); }, g, 1e-7);
            } else {
                fd = central_difference([&](const std::vector<double>& x) { return fairness_loss(x); }, g, 1e-7);
            }
            for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(rel_err(analytic[i], fd[i]), 1e-5);
        }
    }
    EXPECT_GE(checked, 10);
}

TEST(CombinedObjective, Examples) {
    EXPECT_DOUBLE_EQ(combined_objective(0.3, 0.2, 1.0).total, 0.5);
    EXPECT_DOUBLE_EQ(combined_objective(0.3, 0.2, 0.0).total, 0.3);
    EXPECT_NEAR(combined_objective(0.3, 0.2, 0.5).total, 0.4, 1e-15);
    EXPECT_THROW(combined_objective(0.3, 0.2, -1.0), ConfigError);
}

TEST(GapBound, Examples) {
    EXPECT_TRUE(lemma1_bound(0.4, 0.1));
    EXPECT_TRUE(lemma1_bound(0.0, 0.0));
    EXPECT_THROW(lemma1_bound(-0.1, 0.2), ConfigError);
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 10000; ++i) EXPECT_TRUE(lemma1_bound(u(rng), u(rng)));
}
