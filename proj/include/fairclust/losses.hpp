#pragma once

#include <optional>
#include <span>
#include <vector>

namespace fairclust {

/// Confusion counts of one cluster's predictions against its same-identity targets.
/// Soft counts are real-valued; hard counts are whole numbers.
struct ConfusionCounts {
    double tp = 0.0;
    double fp = 0.0;
    double fn = 0.0;
    double tn = 0.0;
};

/// With a threshold, predictions are binarised by q > threshold first. Without one, the soft
/// counts are tp = sum(q * t), fp = sum(q) - tp, fn = sum(t) - tp.
ConfusionCounts confusion_counts(std::span<const double> q, std::span<const double> targets,
                                 std::optional<double> threshold = std::nullopt);

/// (fn + fp) / (2 tp + fn + fp), the Cauchy-Schwarz upper bound of 1 - FMI. Zero when the
/// denominator is zero.
double fmi_loss(const ConfusionCounts& counts);

/// Fowlkes-Mallows index tp / sqrt((tp + fn)(tp + fp)); zero when undefined.
double fowlkes_mallows_index(const ConfusionCounts& counts);

/// d fmi_loss(confusion_counts(q, targets)) / d q for the soft counts.
std::vector<double> fmi_loss_grad(std::span<const double> q, std::span<const double> targets);

/// Mean binary cross-entropy, q clamped to [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> q, std::span<const double> targets);
std::vector<double> bce_loss_grad(std::span<const double> q, std::span<const double> targets);

/// Cluster purity: ground-truth positives over predicted positives, n - n_neg.
struct PurityValue {
    double gamma = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
};

constexpr double kPurityEpsilon = 1e-6;

/// Hard n_neg counts q <= threshold; soft n_neg is sum(1 - q). `clamp` caps gamma at 1.
PurityValue purity(std::span<const double> q, std::span<const double> targets,
                   std::optional<double> threshold = std::nullopt, bool clamp = false);

/// d gamma / d q for the soft purity. Targets enter only through the constant numerator.
std::vector<double> purity_grad(std::span<const double> q, std::span<const double> targets, bool clamp = false);

/// Fairness point selection for the purity-consistency loss.
struct FairnessReference {
    std::optional<double> value;  // explicit gamma_f; batch mean when absent
    bool detach = false;          // treat the batch mean as a constant in the gradient
};

/// (1/B) sum |gamma_i - gamma_f|. Throws ConfigError on an empty batch.
double fairness_loss(std::span<const double> gammas, const FairnessReference& reference = {});

/// Subgradient with sign(0) = 0; includes the batch-mean dependence unless detached.
std::vector<double> fairness_loss_grad(std::span<const double> gammas, const FairnessReference& reference = {});

struct ObjectiveValue {
    double total = 0.0;
    double clustering_term = 0.0;
    double fairness_term = 0.0;
    double lambda = 0.0;
};

/// total = clustering + lambda * fairness. Throws ConfigError for lambda < 0.
ObjectiveValue combined_objective(double clustering, double fairness, double lambda);

/// |mu_i - mu_j| <= mu_i + mu_j for non-negative inputs; throws ConfigError otherwise.
bool lemma1_bound(double mu_i, double mu_j);

}  // namespace fairclust
