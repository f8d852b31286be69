#pragma once

#include <sstream>
#include <string>
#include <string_view>

namespace rtnet::log {

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

/// Threshold from RTNET_LOG (quiet|info|debug), default info.
Level threshold();
void set_threshold(Level level);

/// Writes one line to stderr if `level` passes the threshold.
void write(Level level, std::string_view message);

template <class... Args>
void info(const Args&... args) {
  if (threshold() < Level::Info) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::Info, os.str());
}

template <class... Args>
void debug(const Args&... args) {
  if (threshold() < Level::Debug) return;
  std::ostringstream os;
  (os << ... << args);
  write(Level::Debug, os.str());
}

}  // namespace rtnet::log
