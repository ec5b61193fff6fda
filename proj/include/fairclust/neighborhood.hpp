#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairclust/common.hpp"
#include "fairclust/dataio.hpp"

namespace fairclust {

/// A centroid and its n most similar samples, in descending similarity order.
/// members[0] is the centroid itself with similarity 1.
struct NeighborCluster {
    std::size_t centroid = 0;
    std::vector<std::size_t> members;
    std::vector<double> similarities;
    /// 1 where the member shares the centroid's label; present only for labelled sets.
    std::optional<std::vector<double>> targets;

    std::size_t size() const { return members.size(); }
};

/// k equal contiguous rank blocks of a cluster, each gathered into an s x d token matrix.
struct SubClusterBatch {
    std::size_t k = 1;
    std::size_t s = 0;
    std::vector<Matrix> sequences;
    NeighborCluster source;
};

/// Dot product of two unit vectors. Throws DataError on dimension mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Exact brute-force query. Ties are broken by ascending sample index.
NeighborCluster knn_query(const EmbeddingSet& set, std::size_t centroid, std::size_t n);

/// knn_query for every sample, fanned out over `threads` workers.
std::vector<NeighborCluster> knn_all(const EmbeddingSet& set, std::size_t n, unsigned threads = 1);

/// Sequence m holds ranks [m*s, (m+1)*s). Throws ConfigError unless k divides n.
SubClusterBatch decompose(const NeighborCluster& cluster, std::size_t k, const EmbeddingSet& set);

/// Concatenates the token matrices back into rank order (n x d).
Matrix flatten(const SubClusterBatch& batch);

/// True iff similarity to the centroid token is non-increasing along every sequence and across
/// every sequence boundary. Similarities are recomputed from the token matrices.
bool verify_order(const SubClusterBatch& batch);

/// Cluster cache ("FCKN"): u64 count, u64 n, then per cluster u64 centroid, n u64 members,
/// n f64 similarities, u8 has_targets and n f64 targets when set.
void save_clusters(const std::vector<NeighborCluster>& clusters, const std::filesystem::path& path);
std::vector<NeighborCluster> load_clusters(const std::filesystem::path& path);

}  // namespace fairclust
