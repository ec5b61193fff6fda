#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairclust/common.hpp"

namespace fairclust {

/// N row-vectors of dimension d, plus optional ground-truth identities and group attributes.
struct EmbeddingSet {
    Matrix vectors;  // N x d
    std::optional<std::vector<std::int64_t>> labels;
    std::optional<std::vector<std::int64_t>> groups;

    std::size_t count() const { return static_cast<std::size_t>(vectors.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }

    /// Throws DataError on non-finite entries or metadata length mismatch.
    void validate() const;
};

enum class EmbeddingFormat { binary, csv };

/// ".csv" selects csv; anything else is the binary container.
EmbeddingFormat format_for_path(const std::filesystem::path& path);

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

/// Values are narrowed to float32 on disk. `provenance` is an optional tag (config hash)
/// recorded in the metadata JSON.
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path, EmbeddingFormat format,
                     const std::string& provenance = {});
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

/// Metadata sidecar used by the csv format.
std::filesystem::path metadata_sidecar(const std::filesystem::path& csv_path);

struct GroupSpec {
    std::int64_t group_id = 0;
    std::size_t identity_count = 1;
    std::size_t min_images = 1;  // images per identity drawn uniformly from [min, max]
    std::size_t max_images = 1;
    /// Expected L2 norm of the noise vector added to an identity centre (per-axis sigma = scale / sqrt(d)).
    double noise_scale = 0.1;
};

struct SyntheticSpec {
    std::vector<GroupSpec> groups;
    std::size_t dim = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Identity centres uniform on the unit sphere; samples are centre + isotropic Gaussian noise,
/// renormalised. Labels are globally unique identity ids, groups the owning group id.
EmbeddingSet generate_synthetic(const SyntheticSpec& spec);

/// Throws DataError naming the first all-zero row.
EmbeddingSet l2_normalize(EmbeddingSet set);

}  // namespace fairclust
