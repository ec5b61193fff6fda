// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fairclust/attention.hpp"
#include "fairclust/common.hpp"
#include "fairclust/losses.hpp"
#include "fairclust/metrics.hpp"
#include "fairclust/pipeline.hpp"
#include "fairclust/trainer.hpp"
#include "test_oracles.hpp"

using namespace fairclust;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(int id, bool ok, const std::string& detail) {
    if (!ok) ++g_failures;
    std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, a, b, c, d);
    return buf;
}

void criterion_1() {
    const std::vector<double> scores{80.32, 91.4, 91.45, 90.48};
    const auto s = summarize(scores);
    const bool ok = std::abs(s.mean - 88.41) <= 0.01 && std::abs(s.std - 5.41) <= 0.01;
    report(1, ok, fmt("mean=%.4f std=%.4f", s.mean, s.std));
}

void criterion_2() {
    std::size_t hard_cases = 0, hard_mismatch = 0;
    for (std::size_t n = 1; n <= 10; ++n) {
        const std::size_t patterns = std::size_t{1} << n;
        std::vector<double> q(n), t(n);
        for (std::size_t a = 0; a < patterns; ++a) {
            for (std::size_t i = 0; i < n; ++i) q[i] = double((a >> i) & 1);
            for (std::size_t b = 0; b < patterns; ++b) {
                for (std::size_t i = 0; i < n; ++i) t[i] = double((b >> i) & 1);
                ++hard_cases;
                if (fmi_loss(confusion_counts(q, t, 0.5)) != oracle::fmi_loss_reference(q, t, true)) ++hard_mismatch;
            }
        }
    }

    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> len(1, 64);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution coin(0.4);
    double worst_soft = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = len(rng);
        std::vector<double> q(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            q[i] = unit(rng);
            t[i] = coin(rng) ? 1.0 : 0.0;
        }
        worst_soft = std::max(worst_soft, std::abs(fmi_loss(confusion_counts(q, t)) - oracle::fmi_loss_reference(q, t, false)));
    }
    report(2, hard_mismatch == 0 && worst_soft <= 1e-12,
           std::to_string(hard_cases) + " binary cases, " + std::to_string(hard_mismatch) +
               " mismatches; worst soft difference " + fmt("%.3g", worst_soft));
}

void criterion_3() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> tp_dist(1, 500), err_dist(0, 500);
    std::size_t violations = 0, iff_failures = 0, equalities = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        ConfusionCounts c;
        c.tp = tp_dist(rng);
        c.fn = err_dist(rng);
        // Force a share of balanced cases so both sides of the equivalence are exercised.
        c.fp = trial % 4 == 0 ? c.fn : err_dist(rng);
        const double lhs = 1.0 - fowlkes_mallows_index(c);
        const double rhs = fmi_loss(c);
        if (lhs > rhs + 1e-12) ++violations;
        const bool equal = std::abs(lhs - rhs) <= 1e-12;
        equalities += equal;
        if (equal != (c.tp + c.fn == c.tp + c.fp)) ++iff_failures;
    }
    report(3, violations == 0 && iff_failures == 0,
           std::to_string(violations) + " bound violations, " + std::to_string(iff_failures) +
               " equality mismatches, " + std::to_string(equalities) + " equal cases");
}

void criterion_4() {
    std::mt19937_64 rng(4);
    std::exponential_distribution<double> dist(1.0);
    std::size_t violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const double a = trial % 10 == 0 ? 0.0 : dist(rng);
        const double b = dist(rng);
        if (!lemma1_bound(a, b)) ++violations;
    }
    report(4, violations == 0, std::to_string(violations) + " violations in 10000 pairs");
}

void criterion_5() {
    Hyper h;
    h.d = 8;
    h.n = 8;
    h.k = 2;
    h.n_block = 1;
    h.n_head = 2;
    h.ff_dim = 16;
    const auto start = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) worst = std::max(worst, gradient_check(h, 1, seed, 1.0, 1e-5).worst);
    const double elapsed = seconds_since(start);
    report(5, worst < 1e-4 && elapsed < 60.0, fmt("worst relative error %.3g over 5 seeds in %.1f s", worst, elapsed));
}

// With W = I and the centroid on the first axis, each key's logit is its first coordinate.
double score(const std::vector<double>& logits, const std::vector<std::size_t>& keys, std::size_t j) {
    const std::size_t d = 4;
    Matrix tokens = Matrix::Zero(static_cast<Eigen::Index>(keys.size()), d);
    std::size_t pos = 0;
    for (std::size_t r = 0; r < keys.size(); ++r) {
        tokens(static_cast<Eigen::Index>(r), 0) = logits[keys[r]];
        if (keys[r] == j) pos = r;
    }
    RowVector centroid = RowVector::Zero(d);
    centroid(0) = 1.0;
    const Matrix identity = Matrix::Identity(d, d);
    return cross_attention_scores(centroid, tokens, identity)(static_cast<Eigen::Index>(pos));
}

void criterion_6() {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> size(2, 32);
    std::uniform_real_distribution<double> logit(-5.0, 5.0);
    std::size_t failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = size(rng);
        std::vector<double> logits(n);
        for (auto& v : logits) v = logit(rng);
        const std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        std::vector<std::size_t> all(n), subset{j};
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        const std::size_t keep = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
        std::vector<std::size_t> others;
        for (std::size_t i = 0; i < n; ++i)
            if (i != j) others.push_back(i);
        std::shuffle(others.begin(), others.end(), rng);
        subset.insert(subset.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(keep - 1));
        if (!(score(logits, subset, j) > score(logits, all, j))) ++failures;
    }

    std::size_t uniform_failures = 0;
    for (std::size_t n = 2; n <= 32; ++n) {
        const std::vector<double> logits(n, 0.7);
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        for (std::size_t sub = 1; sub < n; ++sub) {
            const std::vector<std::size_t> subset(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(sub));
            if (score(logits, subset, 0) != 1.0 / double(sub) || score(logits, all, 0) != 1.0 / double(n))
                ++uniform_failures;
        }
    }
    report(6, failures == 0 && uniform_failures == 0,
           std::to_string(failures) + " of 1000 random sets failed, " + std::to_string(uniform_failures) +
               " equal-logit mismatches");
}

void criterion_7() {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> size(1, 50);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = size(rng);
        const auto a = oracle::random_labels(rng, n);
        const auto b = oracle::random_labels(rng, n);
        const auto pa = Partition::from_labels(a), pb = Partition::from_labels(b);
        worst = std::max({worst, std::abs(pairwise_f(pa, pb) - oracle::pairwise_f(a, b)),
                          std::abs(bcubed_f(pa, pb) - oracle::bcubed_f(a, b)), std::abs(nmi(pa, pb) - oracle::nmi(a, b))});
    }
    const std::vector<std::int64_t> pred{0, 0, 1}, truth{0, 0, 0};
    const double fp = pairwise_f(Partition::from_labels(pred), Partition::from_labels(truth));
    const double fb = bcubed_f(Partition::from_labels(pred), Partition::from_labels(truth));
    const bool fixtures = std::abs(fp - 0.5) <= 1e-12 && std::abs(fb - 5.0 / 7.0) <= 1e-12;
    report(7, worst <= 1e-12 && fixtures, fmt("worst difference %.3g; F_P=%.6f F_B=%.6f", worst, fp, fb));
}

struct ArmResult {
    double std_fp = 0.0;
    double minor_fp = 0.0;
    double overall_fp = 0.0;
};

ArmResult run_arm(PipelineConfig cfg, const fs::path& dir) {
    cfg.output_dir = dir;
    fs::create_directories(dir);
    const auto report = run_pipeline(cfg);
    ArmResult r;
    r.std_fp = report.std.pairwise_f;
    r.overall_fp = report.overall.pairwise_f;
    // The minor group is the one with the fewest samples.
    std::size_t smallest = 0;
    for (const auto& [group, count] : report.group_sizes)
        if (smallest == 0 || count < smallest) {
            smallest = count;
            r.minor_fp = report.per_group.at(group).pairwise_f;
        }
    return r;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return fa && fb && !sa.str().empty() && sa.str() == sb.str();
}

void criteria_8_to_10(const fs::path& config, const fs::path& work) {
    const PipelineConfig base = PipelineConfig::load(config);
    std::ostringstream quiet;
    auto* saved = std::cerr.rdbuf(quiet.rdbuf());

    const auto start = Clock::now();
    int fair_wins = 0, decomposed_wins = 0, fmi_wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PipelineConfig a = base;
        a.set_seed(seed);
        a.train.lambda_max = 1.0;
        PipelineConfig b = a;
        b.train.lambda_max = 0.0;
        PipelineConfig c = a;
        c.model.k = 1;
        PipelineConfig d = b;
        d.train.loss = ClusteringLoss::bce;

        const auto dir = work / ("seed" + std::to_string(seed));
        const auto ra = run_arm(a, dir / "fair");
        const auto rb = run_arm(b, dir / "plain");
        const auto rc = run_arm(c, dir / "whole");
        const auto rd = run_arm(d, dir / "bce");
        fair_wins += ra.std_fp < rb.std_fp;
        decomposed_wins += ra.minor_fp >= rc.minor_fp;
        fmi_wins += rb.overall_fp >= rd.overall_fp;
        std::printf("  seed %llu: std F_P %.4f (lambda 1) vs %.4f (lambda 0); minor F_P %.4f (k=4) vs %.4f (k=1); "
                    "overall F_P %.4f (fmi) vs %.4f (bce)\n",
                    static_cast<unsigned long long>(seed), ra.std_fp, rb.std_fp, ra.minor_fp, rc.minor_fp,
                    rb.overall_fp, rd.overall_fp);
        std::fflush(stdout);
    }
    const double elapsed = seconds_since(start);
    report(8, fair_wins >= 3 && decomposed_wins >= 3 && elapsed < 600.0,
           "lower std in " + std::to_string(fair_wins) + "/5, minor-group k=4 >= k=1 in " +
               std::to_string(decomposed_wins) + "/5, " + fmt("%.0f s", elapsed));
    report(9, fmi_wins >= 3, "fmi overall F_P >= bce in " + std::to_string(fmi_wins) + "/5");

    PipelineConfig again = base;
    again.set_seed(1);
    again.train.lambda_max = 1.0;
    run_arm(again, work / "seed1" / "fair_repeat");
    std::cerr.rdbuf(saved);
    const bool identical = same_bytes(work / "seed1" / "fair" / "partition.csv", work / "seed1" / "fair_repeat" / "partition.csv");
    report(10, identical, identical ? "partition.csv byte-identical across two runs" : "partition.csv differs");
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(FAIRCLUST_ACCEPTANCE_CONFIG);
    const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::path(FAIRCLUST_ACCEPTANCE_WORKDIR);
    try {
        criterion_1();
        criterion_2();
        criterion_3();
        criterion_4();
        criterion_5();
        criterion_6();
        criterion_7();
        criteria_8_to_10(config, work);
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 1;
    }
    std::printf("%d criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
