#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bf/tensor.hpp"

// On-disk dataset container.
//
// Layout: "BFDC0001" | u32 LE header length | UTF-8 JSON header | blobs.
// Every blob starts on a 64-byte boundary (absolute file offset), padding is
// zero-filled, and tensor data is little-endian row-major.
namespace bf::container {

inline constexpr char kMagic[] = "BFDC0001";
inline constexpr std::size_t kMagicSize = 8;
inline constexpr int kFormatVersion = 1;
inline constexpr std::size_t kBlobAlignment = 64;

struct Interval {
  std::uint64_t start = 0;
  std::uint64_t stop = 0;

  std::uint64_t length() const noexcept { return stop - start; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct SourceDescriptor {
  std::string name;
  DType dtype = DType::F64;
  Shape shape;
  std::vector<std::string> axis_labels;
  // Filled in by the writer.
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
  std::string sha256;

  std::uint64_t num_examples() const noexcept { return shape.empty() ? 0 : shape[0]; }
  std::uint64_t expected_nbytes() const noexcept;
  std::uint64_t row_bytes() const noexcept;

  friend bool operator==(const SourceDescriptor&, const SourceDescriptor&) = default;
};

// std::nullopt marks a source the split does not offer.
struct SplitDescriptor {
  std::string name;
  std::map<std::string, std::optional<Interval>> per_source;

  friend bool operator==(const SplitDescriptor&, const SplitDescriptor&) = default;
};

struct Provenance {
  std::string created_by;
  std::string command_line;
};

struct ContainerHeader {
  int format_version = kFormatVersion;
  std::string created_by;
  std::string command_line;
  std::vector<SourceDescriptor> sources;
  std::vector<SplitDescriptor> splits;

  const SourceDescriptor& source(std::string_view name) const;
  const SplitDescriptor& split(std::string_view name) const;
  // Interval of `source` within `split`, or nullopt when UNAVAILABLE
  // (sources a split does not mention are unavailable too).
  std::optional<Interval> interval(const SplitDescriptor& split, std::string_view source) const;

  nlohmann::ordered_json to_json() const;
  static ContainerHeader from_json(const nlohmann::json& j);

  friend bool operator==(const ContainerHeader&, const ContainerHeader&) = default;
};

// Header invariant violations, empty when the header is well formed.
// Problems tied to one source are prefixed with "source '<name>': ".
std::vector<std::string> check_header(const ContainerHeader& header, std::uint64_t blobs_start);

struct SourceData {
  SourceDescriptor descriptor;  // offset, nbytes and sha256 are ignored
  Tensor payload;
};

ContainerHeader write_container(const std::filesystem::path& path,
                                std::span<const SourceData> sources,
                                std::span<const SplitDescriptor> splits,
                                const Provenance& provenance);

ContainerHeader read_header(const std::filesystem::path& path);

Tensor read_slice(const std::filesystem::path& path, std::string_view source,
                  std::uint64_t start, std::uint64_t stop);

/// Keeps one file handle open for repeated out-of-core row reads.
class ContainerReader {
 public:
  explicit ContainerReader(const std::filesystem::path& path);

  const ContainerHeader& header() const noexcept { return header_; }
  const std::filesystem::path& path() const noexcept { return path_; }

  // Rows [start, stop) of `source`. Seeks to the first row and reads exactly
  // (stop - start) rows' worth of bytes.
  Tensor read_rows(std::string_view source, std::uint64_t start, std::uint64_t stop);

  std::uint64_t read_calls() const noexcept { return read_calls_; }
  std::uint64_t bytes_read() const noexcept { return bytes_read_; }

 private:
  std::filesystem::path path_;
  ContainerHeader header_;
  std::ifstream file_;
  std::uint64_t read_calls_ = 0;
  std::uint64_t bytes_read_ = 0;
};

struct SourceCheck {
  std::string name;
  bool invariants_ok = true;
  bool digest_ok = true;
  std::vector<std::string> problems;

  bool passed() const noexcept { return invariants_ok && digest_ok; }
};

struct ValidationReport {
  bool header_ok = true;
  std::vector<std::string> header_problems;
  std::vector<SourceCheck> sources;

  bool passed() const noexcept;
  std::string to_text() const;
};

// Corruption is reported, never thrown. Throws IoError only when the file
// cannot be opened.
ValidationReport validate(const std::filesystem::path& path);

// Stable human-readable description of a container.
std::string format_info(const ContainerHeader& header);
std::string info(const std::filesystem::path& path);

}  // namespace bf::container
