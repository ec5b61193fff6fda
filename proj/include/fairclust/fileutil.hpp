#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace fairclust {

/// Whole-file read; throws DataError with the path on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temporary and rename so readers never observe a partial file.
/// Throws Error with the path on failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// 64-bit FNV-1a, used for config provenance hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Little-endian scalar packing. The host is assumed little-endian (checked at compile time).
static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

template <typename T>
void put_le(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
    T value;
    std::memcpy(&value, in.data() + offset, sizeof(T));
    return value;
}

}  // namespace fairclust
