#include "fairclust/postprocess.hpp"

#include <charconv>
#include <map>
#include <numeric>
#include <unordered_map>

#include "fairclust/fileutil.hpp"

namespace fairclust {

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t count) : parent_(count), rank_(count, 0) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned> rank_;
};

}  // namespace

Partition Partition::from_labels(std::span<const std::int64_t> labels) {
    Partition p;
    p.assignment.resize(labels.size());
    std::unordered_map<std::int64_t, std::int64_t> remap;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(labels[i], static_cast<std::int64_t>(remap.size()));
        p.assignment[i] = it->second;
    }
    p.cluster_count = remap.size();
    return p;
}

LinkSet extract_links(std::span<const NeighborCluster> clusters, std::span<const std::vector<double>> predictions,
                      double threshold) {
    if (clusters.size() != predictions.size())
        throw DataError("got predictions for " + std::to_string(predictions.size()) + " clusters, expected " +
                        std::to_string(clusters.size()));
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("link threshold must lie in (0, 1)");

    std::map<std::pair<std::size_t, std::size_t>, double> best;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& cl = clusters[c];
        const auto& q = predictions[c];
        if (q.size() != cl.size()) throw DataError("prediction length does not match cluster " + std::to_string(c));
        for (std::size_t r = 1; r < cl.size(); ++r) {
            if (!(q[r] > threshold)) continue;
            const std::size_t a = cl.centroid, b = cl.members[r];
            if (a == b) continue;
            const auto key = std::minmax(a, b);
            auto [it, inserted] = best.try_emplace({key.first, key.second}, q[r]);
            if (!inserted) it->second = std::max(it->second, q[r]);
        }
    }
    LinkSet links;
    links.edges.reserve(best.size());
    for (const auto& [pair, conf] : best) links.edges.push_back({pair.first, pair.second, conf});
    return links;
}

Partition merge(const LinkSet& links, std::size_t count) {
    DisjointSets sets(count);
    for (const auto& e : links.edges) {
        if (e.i >= count || e.j >= count) throw DataError("link endpoint out of range");
        sets.unite(e.i, e.j);
    }
    // Scanning samples in index order labels each component by its smallest member.
    std::vector<std::int64_t> roots(count);
    for (std::size_t i = 0; i < count; ++i) roots[i] = static_cast<std::int64_t>(sets.find(i));
    return Partition::from_labels(roots);
}

void save_partition(const Partition& partition, const std::filesystem::path& path, const std::string& provenance) {
    std::string out;
    if (!provenance.empty()) out += "# config_hash=" + provenance + "\n";
    out += "sample_index,cluster_id\n";
    for (std::size_t i = 0; i < partition.size(); ++i)
        out += std::to_string(i) + "," + std::to_string(partition.assignment[i]) + "\n";
    write_file(path, out);
}

Partition load_partition(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<std::pair<std::size_t, std::int64_t>> rows;
    std::size_t pos = 0, line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen && line == "sample_index,cluster_id") {
            header_seen = true;
            continue;
        }
        const auto comma = line.find(',');
        std::size_t index = 0;
        std::int64_t id = 0;
        bool ok = comma != std::string_view::npos;
        if (ok) {
            auto r1 = std::from_chars(line.data(), line.data() + comma, index);
            auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), id);
            ok = r1.ec == std::errc() && r1.ptr == line.data() + comma && r2.ec == std::errc() &&
                 r2.ptr == line.data() + line.size();
        }
        if (!ok) throw ParseError("malformed partition row in " + path.string(), line_no, ParseError::Unit::line);
        rows.emplace_back(index, id);
    }
    std::vector<std::int64_t> labels(rows.size());
    std::vector<bool> seen(rows.size(), false);
    for (const auto& [index, id] : rows) {
        if (index >= rows.size() || seen[index])
            throw DataError("partition " + path.string() + " does not list each sample exactly once");
        seen[index] = true;
        labels[index] = id;
    }
    return Partition::from_labels(labels);
}

}  // namespace fairclust
