#pragma once

#include <set>
#include <string>

#include "json.hpp"
#include "rtnet/error.hpp"

namespace rtnet {

/// Reads fields out of a JSON object and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& obj, std::string context) : obj_(obj), context_(std::move(context)) {
    if (!obj_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  template <class T>
  void optional(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  T required(const std::string& key) {
    if (!has(key)) throw ConfigError(context_ + ": missing key '" + key + "'");
    T out{};
    optional(key, out);
    return out;
  }

  const nlohmann::json& at(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  /// Throws ConfigError naming the first unknown key.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const nlohmann::json& obj_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace rtnet
