#pragma once

namespace rtnet {

inline constexpr const char* kVersion = "1.0.0";
/// Bumped whenever a report field is added, renamed or removed.
inline constexpr int kReportSchema = 1;

}  // namespace rtnet
