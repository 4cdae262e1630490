#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bf/container.hpp"

// Built-in dataset registry behind the download/convert tools.
namespace bf::datasets {

struct RawFile {
  std::string filename;
  std::string url;     // empty for generated files
  std::string sha256;  // empty for generated files (digest of the generator output)
};

// Synthetic datasets produce their raw files from a fixed seed instead of
// fetching them. Returns filename -> file contents.
using Generator = std::function<std::map<std::string, std::string>()>;
// Reads the raw files in `raw_dir` and returns container sources and splits.
using Converter = std::function<std::pair<std::vector<container::SourceData>,
                                          std::vector<container::SplitDescriptor>>(
    const std::filesystem::path& raw_dir)>;

struct DatasetEntry {
  std::string name;
  std::vector<RawFile> files;
  Generator generator;
  Converter converter;
};

class Registry {
 public:
  // Contains "synth-blobs" and "synth-seq".
  static Registry builtin();

  void add(DatasetEntry entry);
  const DatasetEntry& find(std::string_view name) const;
  std::vector<std::string> names() const;

  // Expected digest of every raw file of `name`, generating synthetic files
  // in memory when needed.
  std::map<std::string, std::string> expected_digests(std::string_view name) const;

 private:
  std::vector<DatasetEntry> entries_;
};

struct DownloadResult {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> fetched;  // written this call
  std::vector<std::string> skipped;  // already present with a valid digest
};

// Idempotent: files already present with a matching digest are left alone;
// missing or tampered files are fetched (or regenerated) and re-verified.
DownloadResult download(const Registry& registry, std::string_view name,
                        const std::filesystem::path& dest_dir);

// Verifies the raw files and writes a container whose provenance records
// `command_line` and the tool version.
container::ContainerHeader convert(const Registry& registry, std::string_view name,
                                   const std::filesystem::path& raw_dir,
                                   const std::filesystem::path& out_path,
                                   const std::string& command_line);

// Parameters of the built-in synthetic datasets.
struct BlobsConfig {
  std::uint64_t seed = 1234;
  std::size_t num_examples = 200;
  double center = 1.5;
  double stddev = 0.5;
};
struct SequencesConfig {
  std::uint64_t seed = 4321;
  std::size_t num_sequences = 64;
  std::size_t min_length = 3;
  std::size_t max_length = 10;
  std::int32_t vocabulary = 8;
};

std::string generate_blobs_csv(const BlobsConfig& config);
std::string generate_sequences_text(const SequencesConfig& config);

}  // namespace bf::datasets
