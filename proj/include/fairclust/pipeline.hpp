#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairclust/attention.hpp"
#include "fairclust/dataio.hpp"
#include "fairclust/metrics.hpp"
#include "fairclust/postprocess.hpp"
#include "fairclust/trainer.hpp"
#include "json.hpp"

namespace fairclust {

/// Either an embedding file or a synthetic recipe (materialised by the generate stage).
struct DataSource {
    std::optional<std::filesystem::path> path;
    std::optional<SyntheticSpec> synthetic;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    DataSource train_data;
    std::optional<DataSource> eval_data;  // defaults to the training data
    Hyper model;                          // model.n is the kNN cluster size
    TrainConfig train;
    double threshold = 0.5;
    std::vector<MetricKind> metrics{MetricKind::pairwise_f, MetricKind::bcubed_f, MetricKind::nmi};
    std::string group_attribute = "groups";
    MetricKind delta_metric = MetricKind::pairwise_f;
    std::filesystem::path output_dir = "out";

    /// Throws ConfigError on unknown keys' values, bad types, or invariant violations.
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::filesystem::path& path);

    /// Fully-resolved settings; output_dir and threads are excluded since they cannot change results.
    nlohmann::json canonical_json() const;
    std::uint64_t hash() const;
    std::string hash_hex() const;

    void validate() const;

    /// Applies --seed, keeping derived seeds (training, synthetic defaults) in sync.
    void set_seed(std::uint64_t value);

private:
    bool train_seed_explicit_ = false;
    bool eval_seed_explicit_ = false;
};

// --- in-memory pipeline pieces --------------------------------------------------------------

/// Model probabilities for each cluster, rank order.
std::vector<std::vector<double>> predict_clusters(const EmbeddingSet& set, const std::vector<NeighborCluster>& clusters,
                                                  const IntraformerParams& params, unsigned threads = 1);

/// predict -> extract_links -> merge.
Partition cluster_embeddings(const EmbeddingSet& set, const std::vector<NeighborCluster>& clusters,
                             const IntraformerParams& params, double threshold, unsigned threads = 1);

/// Ground-truth partition and group report of `pred` against a labelled set.
FairnessReport evaluate_against(const Partition& pred, const EmbeddingSet& set, MetricKind delta_metric);

// --- file-backed stages ---------------------------------------------------------------------

/// Tracks files written during a command so they can be removed if it fails.
class ArtifactTracker {
public:
    void record(const std::filesystem::path& path) { written_.push_back(path); }
    void commit() { written_.clear(); }
    void rollback();
    ~ArtifactTracker() { rollback(); }

private:
    std::vector<std::filesystem::path> written_;
};

struct ArtifactPaths {
    std::filesystem::path train_embeddings, eval_embeddings;
    std::filesystem::path train_clusters, eval_clusters;
    std::filesystem::path checkpoint, train_log;
    std::filesystem::path partition;
    std::filesystem::path report_json, report_csv;
    std::filesystem::path gradcheck;

    static ArtifactPaths in(const std::filesystem::path& dir);
};

void run_generate(const PipelineConfig& cfg, ArtifactTracker& tracker);
void run_knn(const PipelineConfig& cfg, ArtifactTracker& tracker);
void run_train(const PipelineConfig& cfg, ArtifactTracker& tracker);
void run_cluster(const PipelineConfig& cfg, ArtifactTracker& tracker);

/// `pred` / `truth` override the stage's partition and the labels of the evaluation data.
FairnessReport run_evaluate(const PipelineConfig& cfg, ArtifactTracker& tracker,
                            const std::optional<std::filesystem::path>& pred = std::nullopt,
                            const std::optional<std::filesystem::path>& truth = std::nullopt);

GradCheckReport run_gradcheck(const PipelineConfig& cfg, ArtifactTracker& tracker, const Hyper& hyper,
                              std::size_t trials);

/// generate (when synthetic), knn, train, cluster, evaluate. Removes its artifacts on failure.
FairnessReport run_pipeline(const PipelineConfig& cfg);

std::string gradcheck_to_json(const GradCheckReport& report, const std::string& provenance = {});

}  // namespace fairclust
