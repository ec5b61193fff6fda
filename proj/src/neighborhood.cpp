#include "fairclust/neighborhood.hpp"

#include <algorithm>
#include <numeric>

#include "fairclust/fileutil.hpp"

namespace fairclust {

namespace {

// Slack for recomputed dot products of identical vectors.
constexpr double kOrderTolerance = 1e-12;

NeighborCluster select_neighbors(const EmbeddingSet& set, std::size_t centroid, std::size_t n, const Vector& sims) {
    const std::size_t total = set.count();
    std::vector<std::size_t> order;
    order.reserve(total - 1);
    for (std::size_t j = 0; j < total; ++j)
        if (j != centroid) order.push_back(j);

    auto better = [&sims](std::size_t a, std::size_t b) {
        const double sa = sims[static_cast<Eigen::Index>(a)];
        const double sb = sims[static_cast<Eigen::Index>(b)];
        return sa != sb ? sa > sb : a < b;
    };
    const std::size_t keep = n - 1;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);

    NeighborCluster cluster;
    cluster.centroid = centroid;
    cluster.members.reserve(n);
    cluster.similarities.reserve(n);
    cluster.members.push_back(centroid);
    cluster.similarities.push_back(1.0);
    for (std::size_t r = 0; r < keep; ++r) {
        cluster.members.push_back(order[r]);
        cluster.similarities.push_back(std::min(1.0, sims[static_cast<Eigen::Index>(order[r])]));
    }
    if (set.labels) {
        const auto& labels = *set.labels;
        std::vector<double> targets(n);
        for (std::size_t r = 0; r < n; ++r) targets[r] = labels[cluster.members[r]] == labels[centroid] ? 1.0 : 0.0;
        cluster.targets = std::move(targets);
    }
    return cluster;
}

void check_query(const EmbeddingSet& set, std::size_t n) {
    if (n < 1) throw ConfigError("cluster size n must be >= 1");
    if (n > set.count())
        throw ConfigError("cluster size n=" + std::to_string(n) + " exceeds N=" + std::to_string(set.count()));
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DataError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
}

NeighborCluster knn_query(const EmbeddingSet& set, std::size_t centroid, std::size_t n) {
    check_query(set, n);
    if (centroid >= set.count()) throw ConfigError("centroid index out of range");
    const Vector sims = set.vectors * set.vectors.row(static_cast<Eigen::Index>(centroid)).transpose();
    return select_neighbors(set, centroid, n, sims);
}

std::vector<NeighborCluster> knn_all(const EmbeddingSet& set, std::size_t n, unsigned threads) {
    check_query(set, n);
    std::vector<NeighborCluster> out(set.count());
    parallel_for(set.count(), threads, [&](std::size_t i) {
        const Vector sims = set.vectors * set.vectors.row(static_cast<Eigen::Index>(i)).transpose();
        out[i] = select_neighbors(set, i, n, sims);
    });
    return out;
}

SubClusterBatch decompose(const NeighborCluster& cluster, std::size_t k, const EmbeddingSet& set) {
    const std::size_t n = cluster.size();
    if (k < 1) throw ConfigError("sub-cluster count k must be >= 1");
    if (n % k != 0)
        throw ConfigError("k=" + std::to_string(k) + " does not divide cluster size n=" + std::to_string(n));

    SubClusterBatch batch;
    batch.k = k;
    batch.s = n / k;
    batch.source = cluster;
    batch.sequences.reserve(k);
    const auto dim = static_cast<Eigen::Index>(set.dim());
    for (std::size_t m = 0; m < k; ++m) {
        Matrix tokens(static_cast<Eigen::Index>(batch.s), dim);
        for (std::size_t j = 0; j < batch.s; ++j) {
            const std::size_t member = cluster.members[m * batch.s + j];
            if (member >= set.count()) throw DataError("cluster member index out of range");
            tokens.row(static_cast<Eigen::Index>(j)) = set.vectors.row(static_cast<Eigen::Index>(member));
        }
        batch.sequences.push_back(std::move(tokens));
    }
    return batch;
}

Matrix flatten(const SubClusterBatch& batch) {
    if (batch.sequences.empty()) return {};
    const auto cols = batch.sequences.front().cols();
    Eigen::Index rows = 0;
    for (const auto& seq : batch.sequences) rows += seq.rows();
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& seq : batch.sequences) {
        out.middleRows(at, seq.rows()) = seq;
        at += seq.rows();
    }
    return out;
}

bool verify_order(const SubClusterBatch& batch) {
    if (batch.sequences.empty() || batch.sequences.front().rows() == 0) return true;
    const RowVector centroid = batch.sequences.front().row(0);
    double previous = std::numeric_limits<double>::infinity();
    for (const auto& seq : batch.sequences) {
        // Covers both the within-block chain and the last-of-block vs first-of-next boundary.
        for (Eigen::Index j = 0; j < seq.rows(); ++j) {
            const double sim = centroid.dot(seq.row(j));
            if (sim > previous + kOrderTolerance) return false;
            previous = sim;
        }
    }
    return true;
}

void save_clusters(const std::vector<NeighborCluster>& clusters, const std::filesystem::path& path) {
    const std::size_t n = clusters.empty() ? 0 : clusters.front().size();
    std::string out("FCKN");
    put_le<std::uint64_t>(out, clusters.size());
    put_le<std::uint64_t>(out, n);
    for (const auto& c : clusters) {
        if (c.size() != n || c.similarities.size() != n) throw DataError("clusters have inconsistent sizes");
        put_le<std::uint64_t>(out, c.centroid);
        for (auto m : c.members) put_le<std::uint64_t>(out, m);
        for (auto s : c.similarities) put_le<double>(out, s);
        put_le<std::uint8_t>(out, c.targets ? 1 : 0);
        if (c.targets)
            for (auto t : *c.targets) put_le<double>(out, t);
    }
    write_file(path, out);
}

std::vector<NeighborCluster> load_clusters(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 20 || bytes.compare(0, 4, "FCKN") != 0)
        throw ParseError("not a cluster cache: " + path.string(), 0, ParseError::Unit::byte);
    const auto count = get_le<std::uint64_t>(bytes, 4);
    const auto n = get_le<std::uint64_t>(bytes, 12);
    std::size_t at = 20;
    auto need = [&](std::size_t bytes_needed) {
        if (at + bytes_needed > bytes.size())
            throw ParseError("truncated cluster cache " + path.string(), bytes.size(), ParseError::Unit::byte);
    };
    std::vector<NeighborCluster> clusters;
    clusters.reserve(std::min<std::uint64_t>(count, bytes.size()));
    for (std::uint64_t c = 0; c < count; ++c) {
        need(8 + n * 16 + 1);
        NeighborCluster cl;
        cl.centroid = get_le<std::uint64_t>(bytes, at);
        at += 8;
        cl.members.resize(n);
        cl.similarities.resize(n);
        for (std::size_t r = 0; r < n; ++r, at += 8) cl.members[r] = get_le<std::uint64_t>(bytes, at);
        for (std::size_t r = 0; r < n; ++r, at += 8) cl.similarities[r] = get_le<double>(bytes, at);
        const auto has_targets = get_le<std::uint8_t>(bytes, at);
        at += 1;
        if (has_targets) {
            need(n * 8);
            std::vector<double> t(n);
            for (std::size_t r = 0; r < n; ++r, at += 8) t[r] = get_le<double>(bytes, at);
            cl.targets = std::move(t);
        }
        clusters.push_back(std::move(cl));
    }
    if (at != bytes.size()) throw ParseError("trailing bytes in cluster cache " + path.string(), at, ParseError::Unit::byte);
    return clusters;
}

}  // namespace fairclust
