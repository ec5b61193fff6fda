#include <cmath>

#include "fairclust/attention.hpp"
#include "fairclust/fileutil.hpp"

namespace fairclust {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 6 * 8;
}  // namespace

void save_checkpoint(const IntraformerParams& params, const std::filesystem::path& path, std::uint64_t provenance) {
    const Hyper& h = params.hyper;
    std::string out("FCPT");
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, provenance);
    for (std::uint64_t v : {h.d, h.n, h.k, h.n_block, h.n_head, h.ff_dim}) put_le<std::uint64_t>(out, v);
    params.visit([&out](const std::string&, const Matrix& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) put_le<double>(out, t.data()[i]);
    });
    write_file(path, out);
}

IntraformerParams load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < kHeaderBytes) throw ParseError("truncated checkpoint " + path.string(), bytes.size(), ParseError::Unit::byte);
    if (bytes.compare(0, 4, "FCPT") != 0) throw ParseError("not a checkpoint: " + path.string(), 0, ParseError::Unit::byte);
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version), 4, ParseError::Unit::byte);

    Hyper h;
    std::size_t at = 16;
    for (std::size_t* field : {&h.d, &h.n, &h.k, &h.n_block, &h.n_head, &h.ff_dim}) {
        *field = get_le<std::uint64_t>(bytes, at);
        at += 8;
    }
    // Cap sizes before allocating so a corrupt header cannot request absurd memory.
    for (std::size_t v : {h.d, h.n, h.k, h.n_block, h.n_head, h.ff_dim})
        if (v > (1u << 20)) throw ParseError("implausible hyperparameter in " + path.string(), 16, ParseError::Unit::byte);
    try {
        h.validate();
    } catch (const ConfigError& e) {
        throw ParseError(std::string("invalid hyperparameters: ") + e.what(), 16, ParseError::Unit::byte);
    }

    IntraformerParams params = IntraformerParams::zeros(h);
    const std::size_t expected = kHeaderBytes + params.parameter_count() * sizeof(double);
    if (bytes.size() != expected)
        throw ParseError("checkpoint size " + std::to_string(bytes.size()) + " does not match expected " +
                             std::to_string(expected),
                         std::min(bytes.size(), expected), ParseError::Unit::byte);
    params.visit([&](const std::string& name, Matrix& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i, at += 8) {
            t.data()[i] = get_le<double>(bytes, at);
            if (!std::isfinite(t.data()[i]))
                throw ParseError("non-finite value in tensor " + name, at, ParseError::Unit::byte);
        }
    });
    return params;
}

}  // namespace fairclust
