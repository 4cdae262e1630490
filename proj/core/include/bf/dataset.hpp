#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bf/tensor.hpp"

namespace bf {

enum class Backend { InMemory, OutOfCore };

std::string_view backend_name(Backend backend) noexcept;
Backend backend_from_name(std::string_view name);

/// Split-scoped, read-only view of a container.
///
/// Indices are relative to the split: index 0 is the first row of the split's
/// interval for every available source. Sources the split marks unavailable
/// are not exposed. The in-memory backend loads the split once at open; the
/// out-of-core backend reads rows on demand, one bounded read per run of
/// consecutive indices.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& container_path, const std::string& split,
                      Backend backend);

  const std::filesystem::path& path() const noexcept;
  const std::string& split() const noexcept;
  Backend backend() const noexcept;
  const std::vector<std::string>& sources() const noexcept;
  std::size_t num_examples() const noexcept;

  // Rows stacked in the order given; duplicates are allowed.
  Item get_examples(std::span<const std::size_t> indices) const;

  // Out-of-core read counters (zero for the in-memory backend).
  std::uint64_t read_calls() const noexcept;
  std::uint64_t bytes_read() const noexcept;

 private:
  struct Impl;
  explicit Dataset(std::shared_ptr<Impl> impl);
  std::shared_ptr<Impl> impl_;
};

}  // namespace bf
