#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

namespace bf {

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view data);

// Digest of `length` bytes starting at `offset`. Throws IoError if the file
// is shorter than requested.
std::string sha256_file_range(const std::filesystem::path& path, std::uint64_t offset,
                              std::uint64_t length);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace bf
