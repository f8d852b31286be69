#include "rtnet/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace rtnet::log {

namespace {

Level from_env() {
  const char* v = std::getenv("RTNET_LOG");
  if (!v) return Level::Info;
  const std::string_view s(v);
  if (s == "quiet") return Level::Quiet;
  if (s == "debug") return Level::Debug;
  return Level::Info;
}

std::atomic<int>& slot() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Level threshold() { return static_cast<Level>(slot().load(std::memory_order_relaxed)); }
void set_threshold(Level level) { slot().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
  if (threshold() < level) return;
  std::lock_guard lock(sink_mutex());
  std::cerr << "[rtnet] " << message << '\n';
}

}  // namespace rtnet::log
