#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairclust/common.hpp"
#include "fairclust/metrics.hpp"
#include "test_oracles.hpp"

using namespace fairclust;

namespace {

Partition P(std::vector<std::int64_t> v) { return Partition::from_labels(v); }

}  // namespace

TEST(PairwiseF, Examples) {
    EXPECT_DOUBLE_EQ(pairwise_f(P({0, 0, 1}), P({0, 0, 0})), 0.5);
    EXPECT_DOUBLE_EQ(pairwise_f(P({3, 3, 1, 2}), P({0, 0, 5, 6})), 1.0);
    EXPECT_DOUBLE_EQ(pairwise_f(P({0, 1, 2}), P({0, 0, 0})), 0.0);
    EXPECT_THROW(pairwise_f(P({0, 1}), P({0})), DataError);
}

TEST(BCubedF, Examples) {
    EXPECT_NEAR(bcubed_f(P({0, 0, 1}), P({0, 0, 0})), 5.0 / 7.0, 1e-15);
    EXPECT_DOUBLE_EQ(bcubed_f(P({1, 2, 2, 0}), P({7, 8, 8, 9})), 1.0);
}

TEST(Nmi, Examples) {
    EXPECT_NEAR(nmi(P({0, 0, 1, 1, 2}), P({5, 5, 4, 4, 3})), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(nmi(P({0, 0, 0, 0}), P({0, 0, 1, 1})), 0.0);
    EXPECT_NEAR(nmi(P({0, 0, 1, 1}), P({0, 0, 0, 1})), oracle::nmi({0, 0, 1, 1}, {0, 0, 0, 1}), 1e-12);
}

TEST(Metrics, MatchBruteForceOracles) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> size(1, 50);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(size(rng));
        const auto a = oracle::random_labels(rng, n);
        const auto b = oracle::random_labels(rng, n);
        EXPECT_NEAR(pairwise_f(P(a), P(b)), oracle::pairwise_f(a, b), 1e-12);
        EXPECT_NEAR(bcubed_f(P(a), P(b)), oracle::bcubed_f(a, b), 1e-12);
        EXPECT_NEAR(nmi(P(a), P(b)), oracle::nmi(a, b), 1e-12);
    }
}

TEST(Metrics, RangeSymmetryAndRelabelInvariance) {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = oracle::random_labels(rng, 30);
        const auto b = oracle::random_labels(rng, 30);
        std::vector<std::int64_t> shifted(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) shifted[i] = 1000 - 7 * a[i];
        const auto m = evaluate_partition(P(a), P(b));
        const auto m2 = evaluate_partition(P(shifted), P(b));
        for (double v : {m.pairwise_f, m.bcubed_f, m.nmi}) {
            EXPECT_GE(v, -1e-9);
            EXPECT_LE(v, 1.0 + 1e-9);
        }
        EXPECT_DOUBLE_EQ(m.pairwise_f, m2.pairwise_f);
        EXPECT_DOUBLE_EQ(m.bcubed_f, m2.bcubed_f);
        EXPECT_NEAR(m.nmi, m2.nmi, 1e-12);
        EXPECT_NEAR(nmi(P(a), P(b)), nmi(P(b), P(a)), 1e-12);
    }
}

TEST(Metrics, PerfectScoreOnlyForEqualPartitions) {
    std::mt19937_64 rng(107);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = oracle::random_labels(rng, 12);
        const auto b = oracle::random_labels(rng, 12);
        const bool equal = P(a) == P(b);
        EXPECT_EQ(pairwise_f(P(a), P(b)) == 1.0, equal);
        EXPECT_EQ(bcubed_f(P(a), P(b)) == 1.0, equal);
    }
}

TEST(Summarize, FairnessStdFixture) {
    const std::vector<double> values{80.32, 91.4, 91.45, 90.48};
    const auto s = summarize(values);
    EXPECT_NEAR(s.mean, 88.4125, 1e-12);
    EXPECT_NEAR(s.std, 5.41, 0.01);
    EXPECT_NEAR(s.std, oracle::sample_std(values), 1e-12);
}

TEST(Summarize, DeltaDp) {
    const std::vector<double> two{0.8, 0.6};
    EXPECT_NEAR(summarize(two).delta_dp, 0.2, 1e-15);
    const std::vector<double> same(4, 0.7);
    EXPECT_EQ(summarize(same).std, 0.0);
    EXPECT_EQ(summarize(same).delta_dp, 0.0);
}

TEST(GroupReport, RestrictsToEachGroup) {
    // group 0: samples 0..3, group 1: samples 4..7
    const auto pred = P({0, 0, 1, 1, 2, 2, 2, 2});
    const auto truth = P({0, 0, 1, 1, 2, 2, 3, 3});
    const std::vector<std::int64_t> groups{0, 0, 0, 0, 1, 1, 1, 1};
    const auto r = group_report(pred, truth, groups);
    ASSERT_EQ(r.per_group.size(), 2u);
    EXPECT_DOUBLE_EQ(r.per_group.at(0).pairwise_f, 1.0);
    EXPECT_DOUBLE_EQ(r.per_group.at(1).pairwise_f, oracle::pairwise_f({0, 0, 0, 0}, {0, 0, 1, 1}));
    EXPECT_NEAR(r.mean.pairwise_f, (1.0 + r.per_group.at(1).pairwise_f) / 2.0, 1e-15);
    EXPECT_NEAR(r.delta_dp, 1.0 - r.per_group.at(1).pairwise_f, 1e-15);
    EXPECT_GE(r.std.pairwise_f, 0.0);
    EXPECT_EQ(r.group_sizes.at(1), 4u);
}

TEST(GroupReport, SkipsTinyGroupsWithWarning) {
    const auto pred = P({0, 0, 1});
    const std::vector<std::int64_t> groups{0, 0, 9};
    const auto r = group_report(pred, pred, groups);
    EXPECT_EQ(r.per_group.size(), 1u);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("9"), std::string::npos);
    EXPECT_THROW(group_report(pred, pred, std::vector<std::int64_t>{0, 0}), DataError);
}

TEST(GroupReport, CsvAndJsonLayout) {
    const auto pred = P({0, 0, 1, 1});
    const std::vector<std::int64_t> groups{3, 3, 5, 5};
    const auto r = group_report(pred, pred, groups, MetricKind::nmi);
    const auto csv = report_to_csv(r, "abc");
    EXPECT_EQ(csv,
              "# config_hash=abc\n"
              "metric,group_3,group_5,Mean,STD\n"
              "pairwise_f,1.000000,1.000000,1.000000,0.000000\n"
              "bcubed_f,1.000000,1.000000,1.000000,0.000000\n"
              "nmi,1.000000,1.000000,1.000000,0.000000\n");
    const MetricKind only[] = {MetricKind::bcubed_f};
    EXPECT_EQ(report_to_csv(r, only), "metric,group_3,group_5,Mean,STD\nbcubed_f,1.000000,1.000000,1.000000,0.000000\n");
    const auto json = report_to_json(r);
    EXPECT_NE(json.find("\"delta_dp_metric\": \"nmi\""), std::string::npos);
}

TEST(MetricNames, RoundTrip) {
    for (auto k : {MetricKind::pairwise_f, MetricKind::bcubed_f, MetricKind::nmi})
        EXPECT_EQ(metric_from_name(metric_name(k)), k);
    EXPECT_THROW(metric_from_name("accuracy"), ConfigError);
}
