#pragma once

#include <string>
#include <unordered_set>

#include <json.hpp>

#include "photoseq/decomposer_net.hpp"
#include "photoseq/errors.hpp"

namespace photoseq::detail {

/// Reads keys of one JSON object into existing values, leaving absent keys at
/// their defaults; `finish()` rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("'" + section_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("'" + path(key) + "' has the wrong type");
    }
  }

  /// Sub-object, which must itself be read strictly.
  const nlohmann::json* child(const char* key) {
    known_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!known_.count(k)) throw ConfigError("unknown key '" + path(k.c_str()) + "'");
    }
  }

  std::string path(const char* key) const { return section_.empty() ? key : section_ + "." + key; }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::unordered_set<std::string> known_;
};

nlohmann::ordered_json network_to_json(const NetworkConfig& c);
/// Overrides fields of `base` with the keys present in `j`.
NetworkConfig network_from_json(const nlohmann::json& j, NetworkConfig base = {},
                                const std::string& section = "network");

}  // namespace photoseq::detail
