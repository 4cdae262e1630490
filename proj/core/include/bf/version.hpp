#pragma once

namespace bf {

inline constexpr char kVersion[] = "0.1.0";
inline constexpr char kToolName[] = "bf";

}  // namespace bf
