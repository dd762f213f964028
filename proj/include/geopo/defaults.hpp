#pragma once

// Cross-module default constants. Anything configurable at runtime lives in
// the per-module config structs; these are just their shared defaults.

namespace geopo {

inline constexpr int kDefaultMaxDepth = 3;     // imagination rounds per episode
inline constexpr int kDefaultBranching = 2;    // children sampled per expansion
inline constexpr int kDefaultGroupSize = 8;    // chains per task in chain mode
inline constexpr double kDefaultFovDeg = 120.0;
inline constexpr double kDefaultMaxRange = 10.0;  // meters

}  // namespace geopo
