#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bf/array.hpp"
#include "bf/mainloop.hpp"
#include "bf/steprules.hpp"

namespace bf::mainloop {

inline constexpr char kSnapshotMagic[8] = {'B', 'F', 'C', 'K', '0', '0', '0', '1'};
inline constexpr int kSnapshotVersion = 1;

/// Complete training state. On disk: magic "BFCK0001", u32 LE header length,
/// JSON header, then 64-byte aligned little-endian f64 blobs referenced from
/// the header as {"blob_index", "dtype", "shape"}.
struct Snapshot {
  int format_version = kSnapshotVersion;
  TrainingStatus status;
  TrainingLog log;
  std::map<std::string, Array> parameters;
  steprules::StepRuleState rule_state;
  nlohmann::json stream_state;
  std::vector<std::pair<std::string, nlohmann::json>> extensions;  // kind, state
  nlohmann::json rule_chain;
  nlohmann::json initial_rule_chain;
  nlohmann::json pipeline_spec;

  friend bool operator==(const Snapshot& a, const Snapshot& b);
};

// Writes to "<path>.tmp" and renames over `path`.
void write_snapshot(const std::filesystem::path& path, const Snapshot& s);
// Throws FormatError for bad magic, unsupported version or corruption.
Snapshot read_snapshot(const std::filesystem::path& path);

}  // namespace bf::mainloop
