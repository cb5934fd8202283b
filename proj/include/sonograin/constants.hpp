#pragma once

#include <cstddef>

namespace sonograin {

inline constexpr int kSampleRate = 48000;
inline constexpr int kTraceRate = 100;
inline constexpr double kTraceStep = 0.01;

// One fragment == one hop == one velocity sample (10 ms at 48 kHz).
inline constexpr std::size_t kHop = 480;

}  // namespace sonograin
