#include "bf/rng.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "bf/error.hpp"

namespace bf {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string to_hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t from_hex(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw FormatError(std::string("rng state: missing hex field '") + key + "'");
  }
  const auto& s = j.at(key).get_ref<const std::string&>();
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used, 16);
  } catch (const std::exception&) {
    throw FormatError("rng state: bad hex value '" + s + "'");
  }
  if (used != s.size()) throw FormatError("rng state: bad hex value '" + s + "'");
  return v;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) noexcept { return mix(x + kGolden); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept {
  return splitmix64(seed ^ splitmix64(key));
}

Rng::Rng(std::uint64_t seed) noexcept {
  std::uint64_t s = seed + kGolden;
  state_ = mix(s);
  s += kGolden;
  inc_ = mix(s) | 1U;
}

Rng::Rng(std::uint64_t state, std::uint64_t inc) noexcept : state_(state), inc_(inc | 1U) {}

std::uint32_t Rng::next_u32() noexcept {
  const std::uint64_t old = state_;
  state_ = old * kMultiplier + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18U) ^ old) >> 27U);
  const auto rot = static_cast<int>(old >> 59U);
  return std::rotr(xorshifted, rot);
}

std::uint32_t Rng::bounded(std::uint32_t n) {
  if (n == 0) throw ContractError("Rng::bounded: n must be positive");
  std::uint64_t m = std::uint64_t{next_u32()} * n;
  auto low = static_cast<std::uint32_t>(m);
  if (low < n) {
    const std::uint32_t threshold = (0U - n) % n;
    while (low < threshold) {
      m = std::uint64_t{next_u32()} * n;
      low = static_cast<std::uint32_t>(m);
    }
  }
  return static_cast<std::uint32_t>(m >> 32U);
}

double Rng::uniform() noexcept {
  const std::uint64_t hi = next_u32();
  const std::uint64_t lo = next_u32();
  return static_cast<double>(((hi << 32U) | lo) >> 11U) * 0x1.0p-53;
}

double Rng::normal() noexcept {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  // 1 - u1 lies in (0, 1], so the logarithm is finite.
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

void Rng::write_le(unsigned char out[16]) const noexcept {
  for (int i = 0; i < 8; ++i) {
    out[i] = static_cast<unsigned char>(state_ >> (8 * i));
    out[8 + i] = static_cast<unsigned char>(inc_ >> (8 * i));
  }
}

Rng Rng::read_le(const unsigned char in[16]) noexcept {
  std::uint64_t state = 0;
  std::uint64_t inc = 0;
  for (int i = 0; i < 8; ++i) {
    state |= std::uint64_t{in[i]} << (8 * i);
    inc |= std::uint64_t{in[8 + i]} << (8 * i);
  }
  return Rng(state, inc);
}

nlohmann::json Rng::to_json() const {
  nlohmann::json j = {{"state", to_hex(state_)}, {"inc", to_hex(inc_)}};
  if (spare_) j["spare"] = to_hex(std::bit_cast<std::uint64_t>(*spare_));
  return j;
}

Rng Rng::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("rng state: expected an object");
  const std::uint64_t inc = from_hex(j, "inc");
  if ((inc & 1U) == 0) throw FormatError("rng state: increment must be odd");
  Rng r(from_hex(j, "state"), inc);
  if (j.contains("spare")) r.spare_ = std::bit_cast<double>(from_hex(j, "spare"));
  return r;
}

}  // namespace bf
