#include "fairclust/dataio.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <set>

#include "fairclust/fileutil.hpp"
#include "json.hpp"

namespace fairclust {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'E', '1'};
constexpr std::size_t kHeaderBytes = 4 + 3 * sizeof(std::uint64_t);

nlohmann::json metadata_json(const EmbeddingSet& set, const std::string& provenance) {
    nlohmann::json meta = nlohmann::json::object();
    if (set.labels) meta["labels"] = *set.labels;
    if (set.groups) meta["groups"] = *set.groups;
    if (!provenance.empty()) meta["config_hash"] = provenance;
    return meta;
}

void apply_metadata(EmbeddingSet& set, const nlohmann::json& meta, const std::string& where) {
    try {
        if (meta.contains("labels")) set.labels = meta.at("labels").get<std::vector<std::int64_t>>();
        if (meta.contains("groups")) set.groups = meta.at("groups").get<std::vector<std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad metadata in " + where + ": " + e.what());
    }
}

std::string format_float(float v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

EmbeddingSet load_binary(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < kHeaderBytes) throw ParseError("truncated header in " + path.string(), bytes.size(), ParseError::Unit::byte);
    if (bytes.compare(0, 4, kMagic, 4) != 0) throw ParseError("bad magic in " + path.string(), 0, ParseError::Unit::byte);

    const auto trailer = get_le<std::uint64_t>(bytes, 4);
    const auto rows = get_le<std::uint64_t>(bytes, 12);
    const auto cols = get_le<std::uint64_t>(bytes, 20);
    if (rows == 0) throw ParseError("empty embedding set in " + path.string(), 12, ParseError::Unit::byte);
    if (cols == 0) throw ParseError("zero dimension in " + path.string(), 20, ParseError::Unit::byte);
    if (rows > (bytes.size() / sizeof(float)) || cols > (bytes.size() / sizeof(float)))
        throw ParseError("header sizes exceed file length in " + path.string(), 12, ParseError::Unit::byte);

    const std::size_t payload = rows * cols * sizeof(float);
    const std::size_t payload_end = kHeaderBytes + payload;
    if (bytes.size() < payload_end) {
        throw ParseError("truncated payload in " + path.string() + ": header declares " + std::to_string(rows) +
                             " rows but only " + std::to_string((bytes.size() - kHeaderBytes) / (cols * sizeof(float))) +
                             " are present",
                         bytes.size(), ParseError::Unit::byte);
    }
    if (trailer != 0 && (trailer < payload_end || trailer > bytes.size()))
        throw ParseError("metadata offset out of range in " + path.string(), 4, ParseError::Unit::byte);
    if (trailer == 0 && bytes.size() != payload_end)
        throw ParseError("unexpected bytes after payload in " + path.string(), payload_end, ParseError::Unit::byte);

    EmbeddingSet set;
    set.vectors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t at = kHeaderBytes + (i * cols + j) * sizeof(float);
            const float v = get_le<float>(bytes, at);
            if (!std::isfinite(v)) throw ParseError("non-finite value in " + path.string(), at, ParseError::Unit::byte);
            set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    if (trailer != 0) {
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(trailer), bytes.end());
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("malformed metadata in " + path.string() + ": " + e.what(), trailer + e.byte,
                             ParseError::Unit::byte);
        }
        apply_metadata(set, meta, path.string());
    }
    set.validate();
    return set;
}

EmbeddingSet load_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;

        std::size_t fields = 0;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string_view field = line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start);
            while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
            while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
            double v = 0.0;
            auto res = std::from_chars(field.data(), field.data() + field.size(), v);
            if (res.ec != std::errc() || res.ptr != field.data() + field.size())
                throw ParseError("malformed number '" + std::string(field) + "' in " + path.string(), line_no,
                                 ParseError::Unit::line);
            if (!std::isfinite(v)) throw ParseError("non-finite value in " + path.string(), line_no, ParseError::Unit::line);
            values.push_back(v);
            ++fields;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (rows == 0) cols = fields;
        else if (fields != cols)
            throw ParseError("row has " + std::to_string(fields) + " fields, expected " + std::to_string(cols) + " in " +
                                 path.string(),
                             line_no, ParseError::Unit::line);
        ++rows;
    }
    if (rows == 0) throw ParseError("empty embedding set in " + path.string(), line_no, ParseError::Unit::line);

    EmbeddingSet set;
    set.vectors = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto sidecar = metadata_sidecar(path);
    if (std::filesystem::exists(sidecar)) {
        const std::string meta_text = read_file(sidecar);
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(meta_text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("malformed metadata in " + sidecar.string() + ": " + e.what(), e.byte, ParseError::Unit::byte);
        }
        apply_metadata(set, meta, sidecar.string());
    }
    set.validate();
    return set;
}

}  // namespace

void EmbeddingSet::validate() const {
    if (vectors.rows() == 0) throw DataError("empty embedding set");
    if (!vectors.allFinite()) throw DataError("embedding set contains non-finite values");
    if (labels && labels->size() != count())
        throw DataError("labels length " + std::to_string(labels->size()) + " does not match N=" + std::to_string(count()));
    if (groups && groups->size() != count())
        throw DataError("groups length " + std::to_string(groups->size()) + " does not match N=" + std::to_string(count()));
}

EmbeddingFormat format_for_path(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? EmbeddingFormat::csv : EmbeddingFormat::binary;
}

std::filesystem::path metadata_sidecar(const std::filesystem::path& csv_path) {
    auto p = csv_path;
    p.replace_extension(".meta.json");
    return p;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
    return format == EmbeddingFormat::binary ? load_binary(path) : load_csv(path);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) { return load_embeddings(path, format_for_path(path)); }

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path, EmbeddingFormat format,
                     const std::string& provenance) {
    set.validate();
    const auto meta = metadata_json(set, provenance);
    const std::size_t rows = set.count();
    const std::size_t cols = set.dim();

    if (format == EmbeddingFormat::binary) {
        std::string out;
        out.reserve(kHeaderBytes + rows * cols * sizeof(float));
        out.append(kMagic, 4);
        const std::size_t payload_end = kHeaderBytes + rows * cols * sizeof(float);
        put_le<std::uint64_t>(out, meta.empty() ? 0 : payload_end);
        put_le<std::uint64_t>(out, rows);
        put_le<std::uint64_t>(out, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                put_le<float>(out, static_cast<float>(set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        if (!meta.empty()) out += meta.dump();
        write_file(path, out);
        return;
    }

    std::string out;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (j) out += ',';
            out += format_float(static_cast<float>(set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
        out += '\n';
    }
    write_file(path, out);
    const auto sidecar = metadata_sidecar(path);
    if (!meta.empty()) write_file(sidecar, meta.dump());
    else if (std::filesystem::exists(sidecar)) std::filesystem::remove(sidecar);
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
    save_embeddings(set, path, format_for_path(path));
}

void SyntheticSpec::validate() const {
    if (dim < 2) throw ConfigError("synthetic data needs dim >= 2");
    if (groups.empty()) throw ConfigError("synthetic spec has no groups");
    std::set<std::int64_t> seen;
    for (const auto& g : groups) {
        if (!seen.insert(g.group_id).second) throw ConfigError("duplicate group id " + std::to_string(g.group_id));
        if (g.identity_count < 1) throw ConfigError("group " + std::to_string(g.group_id) + " has no identities");
        if (g.min_images < 1 || g.min_images > g.max_images)
            throw ConfigError("group " + std::to_string(g.group_id) + " has an invalid images-per-identity range");
        if (!(g.noise_scale > 0.0) || !std::isfinite(g.noise_scale))
            throw ConfigError("group " + std::to_string(g.group_id) + " needs noise_scale > 0");
    }
}

EmbeddingSet generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto dim = static_cast<Eigen::Index>(spec.dim);

    std::vector<RowVector> rows;
    std::vector<std::int64_t> labels;
    std::vector<std::int64_t> groups;
    std::int64_t identity = 0;
    for (const auto& g : spec.groups) {
        std::uniform_int_distribution<std::size_t> images(g.min_images, g.max_images);
        const double sigma = g.noise_scale / std::sqrt(static_cast<double>(spec.dim));
        for (std::size_t id = 0; id < g.identity_count; ++id, ++identity) {
            RowVector centre(dim);
            for (Eigen::Index j = 0; j < dim; ++j) centre[j] = gauss(rng);
            centre.normalize();
            const std::size_t count = images(rng);
            for (std::size_t img = 0; img < count; ++img) {
                RowVector x = centre;
                for (Eigen::Index j = 0; j < dim; ++j) x[j] += sigma * gauss(rng);
                x.normalize();
                rows.push_back(std::move(x));
                labels.push_back(identity);
                groups.push_back(g.group_id);
            }
        }
    }

    EmbeddingSet set;
    set.vectors.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) set.vectors.row(static_cast<Eigen::Index>(i)) = rows[i];
    set.labels = std::move(labels);
    set.groups = std::move(groups);
    return set;
}

EmbeddingSet l2_normalize(EmbeddingSet set) {
    for (Eigen::Index i = 0; i < set.vectors.rows(); ++i) {
        const double norm = set.vectors.row(i).norm();
        if (norm == 0.0) throw DataError("cannot normalise all-zero row " + std::to_string(i));
        set.vectors.row(i) /= norm;
    }
    return set;
}

}  // namespace fairclust
