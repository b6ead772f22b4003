#pragma once

namespace spd {

inline constexpr const char* kToolName = "spd";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace spd
