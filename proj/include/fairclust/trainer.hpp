#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fairclust/attention.hpp"
#include "fairclust/dataio.hpp"
#include "fairclust/losses.hpp"
#include "fairclust/neighborhood.hpp"

namespace fairclust {

enum class ClusteringLoss { fmi, bce };

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    double lr0 = 1e-4;
    double lr_min = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t warmup_epochs = 2;
    double lambda_max = 1.0;
    std::uint64_t seed = 0;
    ClusteringLoss loss = ClusteringLoss::fmi;
    bool detach_reference = false;  // treat the batch-mean fairness point as a constant
    bool clamp_purity = false;      // cap purity at 1
    double clip_norm = 0.0;         // global gradient-norm clip; 0 disables
    unsigned threads = 1;

    void validate() const;
};

/// Adam first/second moments, shaped like the parameters.
struct OptimizerState {
    IntraformerParams first;
    IntraformerParams second;
    std::uint64_t step = 0;

    static OptimizerState for_params(const IntraformerParams& params);
};

/// lr_min + (lr0 - lr_min)(1 + cos(pi step / total)) / 2. Throws ConfigError when total is 0.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, const TrainConfig& cfg);

/// 0 during warm-up, then a linear ramp reaching lambda_max on the final epoch.
double lambda_schedule(std::size_t epoch, const TrainConfig& cfg);

/// Bias-corrected Adam update. Throws NumericError naming the first non-finite gradient tensor.
void adam_step(IntraformerParams& params, const IntraformerParams& grads, OptimizerState& state, double lr,
               const TrainConfig& cfg);

/// Objective over one mini-batch of clusters: mean clustering loss + lambda * purity-consistency loss.
struct BatchEvaluation {
    ObjectiveValue objective;
    double fmi_loss = 0.0;  // mean soft FMI loss, reported whatever the clustering loss
    std::vector<double> gammas;
};

/// When `grads` is non-null it receives d(objective)/d(params) (overwritten, not accumulated).
BatchEvaluation evaluate_batch(std::span<const SubClusterBatch> batch, const IntraformerParams& params, double lambda,
                               const TrainConfig& cfg, IntraformerParams* grads = nullptr);

struct EpochLog {
    std::size_t epoch = 0;
    std::uint64_t step = 0;
    double lr = 0.0;
    double lambda = 0.0;
    ObjectiveValue objective;  // batch means
    double fmi_loss = 0.0;
    double gamma_mean = 0.0;
    double gamma_std = 0.0;  // mean over batches of the within-batch sample std
};

/// One JSON object per line: epoch, step, lr, lambda, fmi_loss, fair_loss, total, gamma_mean, gamma_std.
std::string to_json_line(const EpochLog& log, const std::string& provenance = {});

struct TrainResult {
    IntraformerParams params;
    std::vector<EpochLog> log;
};

/// Builds every sample's kNN cluster (n = model.hyper.n), then runs seeded shuffled mini-batch
/// Adam. Requires labels; group ids are never read.
TrainResult train(const EmbeddingSet& set, IntraformerParams model, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Same, reusing precomputed clusters of `set`.
TrainResult train(const EmbeddingSet& set, const std::vector<NeighborCluster>& clusters, IntraformerParams model,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> groups;  // one per parameter tensor, worst over all trials
    double worst = 0.0;
    std::size_t trials = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
constexpr double kGradCheckFloor = 1e-6;

/// Central differences of the full training objective against the analytic backward pass on
/// small random models and synthetic clusters.
GradCheckReport gradient_check(const Hyper& hyper, std::size_t trials, std::uint64_t seed, double lambda = 1.0,
                               double step = 1e-5);

}  // namespace fairclust
