#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fairclust/neighborhood.hpp"

namespace fairclust {

struct Link {
    std::size_t i = 0;  // i < j
    std::size_t j = 0;
    double confidence = 0.0;

    bool operator==(const Link&) const = default;
};

/// Undirected, deduplicated edges sorted by (i, j).
struct LinkSet {
    std::vector<Link> edges;
};

/// A flat clustering: ids are contiguous in [0, cluster_count).
struct Partition {
    std::vector<std::int64_t> assignment;
    std::size_t cluster_count = 0;

    std::size_t size() const { return assignment.size(); }

    /// Relabels arbitrary ids to a contiguous range ordered by first occurrence.
    static Partition from_labels(std::span<const std::int64_t> labels);

    bool operator==(const Partition&) const = default;
};

/// Edge (centroid, member, q) for every non-centroid member with q > threshold. Duplicate
/// unordered pairs keep the highest confidence.
LinkSet extract_links(std::span<const NeighborCluster> clusters, std::span<const std::vector<double>> predictions,
                      double threshold);

/// Connected components by union-find; component ids ordered by smallest member index.
Partition merge(const LinkSet& links, std::size_t count);

/// "sample_index,cluster_id" rows under a header line. `provenance` becomes a leading comment.
void save_partition(const Partition& partition, const std::filesystem::path& path, const std::string& provenance = {});
Partition load_partition(const std::filesystem::path& path);

}  // namespace fairclust
