#pragma once

#include <cstdint>
#include <optional>

#include <nlohmann/json_fwd.hpp>

namespace bf {

// One round of the splitmix64 output function applied to x + golden gamma.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for an independent sub-stream identified by `key` (e.g. a variable id).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept;

/// PCG32 (XSH-RR, 64-bit LCG state) seeded through splitmix64.
///
/// Every random decision in the library is drawn from an instance of this
/// class, so a run is fully described by its seeds. The generator is not
/// thread-safe; each pipeline stage owns its own instance.
class Rng {
 public:
  static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;

  explicit Rng(std::uint64_t seed = 0) noexcept;
  Rng(std::uint64_t state, std::uint64_t inc) noexcept;

  std::uint32_t next_u32() noexcept;

  // Uniform integer in [0, n) via Lemire's multiply-shift with rejection.
  // Throws ContractError for n == 0.
  std::uint32_t bounded(std::uint32_t n);

  // 53-bit uniform in [0, 1) built from two draws, high word first.
  double uniform() noexcept;

  // Standard normal via Box-Muller. Both outputs of a pair are consumed
  // before new uniforms are drawn.
  double normal() noexcept;

  std::uint64_t state() const noexcept { return state_; }
  std::uint64_t inc() const noexcept { return inc_; }
  std::optional<double> cached_normal() const noexcept { return spare_; }

  // Two little-endian u64 words: state then inc.
  void write_le(unsigned char out[16]) const noexcept;
  static Rng read_le(const unsigned char in[16]) noexcept;

  nlohmann::json to_json() const;
  static Rng from_json(const nlohmann::json& j);

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
  std::optional<double> spare_;
};

}  // namespace bf
