#include "fairclust/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fairclust/common.hpp"

namespace fairclust {

namespace {

constexpr double kProbClamp = 1e-12;

void check_lengths(std::span<const double> q, std::span<const double> targets) {
    if (q.size() != targets.size())
        throw DataError("prediction length " + std::to_string(q.size()) + " does not match target length " +
                        std::to_string(targets.size()));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

ConfusionCounts confusion_counts(std::span<const double> q, std::span<const double> targets,
                                 std::optional<double> threshold) {
    check_lengths(q, targets);
    if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    double tp = 0.0, sum_q = 0.0, sum_t = 0.0, tn = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double out = threshold ? (q[j] > *threshold ? 1.0 : 0.0) : q[j];
        tp += out * targets[j];
        sum_q += out;
        sum_t += targets[j];
        tn += (1.0 - out) * (1.0 - targets[j]);
    }
    return {tp, sum_q - tp, sum_t - tp, tn};
}

double fmi_loss(const ConfusionCounts& c) {
    const double denom = 2.0 * c.tp + c.fn + c.fp;
    return denom > 0.0 ? (c.fp + c.fn) / denom : 0.0;
}

double fowlkes_mallows_index(const ConfusionCounts& c) {
    const double denom = std::sqrt((c.tp + c.fn) * (c.tp + c.fp));
    return denom > 0.0 ? c.tp / denom : 0.0;
}

std::vector<double> fmi_loss_grad(std::span<const double> q, std::span<const double> targets) {
    check_lengths(q, targets);
    // With S = sum(q) + sum(t) and T = sum(q t), the loss is 1 - 2T / S.
    double sum = 0.0, overlap = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        sum += q[j] + targets[j];
        overlap += q[j] * targets[j];
    }
    std::vector<double> grad(q.size(), 0.0);
    if (sum <= 0.0) return grad;
    for (std::size_t j = 0; j < q.size(); ++j) grad[j] = -2.0 * (targets[j] * sum - overlap) / (sum * sum);
    return grad;
}

double bce_loss(std::span<const double> q, std::span<const double> targets) {
    check_lengths(q, targets);
    if (q.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double p = std::clamp(q[j], kProbClamp, 1.0 - kProbClamp);
        total -= targets[j] * std::log(p) + (1.0 - targets[j]) * std::log1p(-p);
    }
    return total / static_cast<double>(q.size());
}

std::vector<double> bce_loss_grad(std::span<const double> q, std::span<const double> targets) {
    check_lengths(q, targets);
    std::vector<double> grad(q.size(), 0.0);
    const double inv_n = q.empty() ? 0.0 : 1.0 / static_cast<double>(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) {
        if (q[j] < kProbClamp || q[j] > 1.0 - kProbClamp) continue;  // clamped region is flat
        grad[j] = inv_n * (-targets[j] / q[j] + (1.0 - targets[j]) / (1.0 - q[j]));
    }
    return grad;
}

PurityValue purity(std::span<const double> q, std::span<const double> targets, std::optional<double> threshold,
                   bool clamp) {
    check_lengths(q, targets);
    if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    double positives = 0.0, negatives = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        positives += targets[j];
        negatives += threshold ? (q[j] > *threshold ? 0.0 : 1.0) : 1.0 - q[j];
    }
    PurityValue v;
    v.numerator = positives;
    v.denominator = static_cast<double>(q.size()) - negatives;
    v.gamma = positives / std::max(v.denominator, kPurityEpsilon);
    if (clamp) v.gamma = std::min(v.gamma, 1.0);
    return v;
}

std::vector<double> purity_grad(std::span<const double> q, std::span<const double> targets, bool clamp) {
    const PurityValue v = purity(q, targets, std::nullopt, false);
    std::vector<double> grad(q.size(), 0.0);
    if (v.denominator <= kPurityEpsilon) return grad;
    if (clamp && v.gamma >= 1.0) return grad;
    // The soft denominator n - sum(1 - q) equals sum(q).
    const double g = -v.numerator / (v.denominator * v.denominator);
    std::fill(grad.begin(), grad.end(), g);
    return grad;
}

double fairness_loss(std::span<const double> gammas, const FairnessReference& reference) {
    if (gammas.empty()) throw ConfigError("fairness loss needs a non-empty batch");
    const double batch = static_cast<double>(gammas.size());
    double ref = 0.0;
    if (reference.value) {
        ref = *reference.value;
    } else {
        for (double g : gammas) ref += g;
        ref /= batch;
    }
    double total = 0.0;
    for (double g : gammas) total += std::abs(g - ref);
    return total / batch;
}

std::vector<double> fairness_loss_grad(std::span<const double> gammas, const FairnessReference& reference) {
    if (gammas.empty()) throw ConfigError("fairness loss needs a non-empty batch");
    const double batch = static_cast<double>(gammas.size());
    double ref = 0.0;
    if (reference.value) {
        ref = *reference.value;
    } else {
        for (double g : gammas) ref += g;
        ref /= batch;
    }
    std::vector<double> grad(gammas.size());
    double sign_sum = 0.0;
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        grad[i] = sign(gammas[i] - ref) / batch;
        sign_sum += grad[i];
    }
    if (!reference.value && !reference.detach)
        for (auto& g : grad) g -= sign_sum / batch;
    return grad;
}

ObjectiveValue combined_objective(double clustering, double fairness, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    return {clustering + lambda * fairness, clustering, fairness, lambda};
}

bool lemma1_bound(double mu_i, double mu_j) {
    if (!(mu_i >= 0.0) || !(mu_j >= 0.0)) throw ConfigError("the gap bound needs non-negative expected losses");
    return std::abs(mu_i - mu_j) <= mu_i + mu_j;
}

}  // namespace fairclust
