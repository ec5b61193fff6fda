#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairclust/postprocess.hpp"

namespace fairclust {

struct PartitionMetrics {
    double pairwise_f = 0.0;
    double bcubed_f = 0.0;
    double nmi = 0.0;
};

/// Harmonic mean of pair precision and recall over all unordered pairs. Two all-singleton
/// partitions score 1; otherwise an empty pair set contributes precision (or recall) 0.
double pairwise_f(const Partition& pred, const Partition& truth);

/// Harmonic mean of the averaged per-sample BCubed precision and recall.
double bcubed_f(const Partition& pred, const Partition& truth);

/// Mutual information over the arithmetic mean of the entropies (natural log). 0 when exactly
/// one side has zero entropy, 1 when both do.
double nmi(const Partition& pred, const Partition& truth);

PartitionMetrics evaluate_partition(const Partition& pred, const Partition& truth);

enum class MetricKind { pairwise_f, bcubed_f, nmi };
MetricKind metric_from_name(const std::string& name);
std::string metric_name(MetricKind kind);
double metric_value(const PartitionMetrics& m, MetricKind kind);

/// Mean, Bessel-corrected standard deviation and 1/2 sum_i sum_j |v_i - v_j| of per-group scores.
struct GroupSummary {
    double mean = 0.0;
    double std = 0.0;
    double delta_dp = 0.0;
};

GroupSummary summarize(std::span<const double> per_group);

struct FairnessReport {
    std::map<std::int64_t, PartitionMetrics> per_group;
    std::map<std::int64_t, std::size_t> group_sizes;
    PartitionMetrics overall;
    PartitionMetrics mean;
    PartitionMetrics std;
    double delta_dp = 0.0;
    MetricKind delta_metric = MetricKind::pairwise_f;
    std::vector<std::string> warnings;
};

/// Scores each group's induced sub-partition (pairs with both ends inside the group). Groups with
/// fewer than two samples are skipped with a warning.
FairnessReport group_report(const Partition& pred, const Partition& truth, std::span<const std::int64_t> groups,
                            MetricKind delta_metric = MetricKind::pairwise_f);

/// JSON object with per-group, overall, mean, std and delta_dp fields.
std::string report_to_json(const FairnessReport& report, const std::string& provenance = {});

/// One row per requested metric, groups as columns, then Mean and STD.
std::string report_to_csv(const FairnessReport& report, std::span<const MetricKind> rows,
                          const std::string& provenance = {});
std::string report_to_csv(const FairnessReport& report, const std::string& provenance = {});

}  // namespace fairclust
