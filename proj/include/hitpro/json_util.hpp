#pragma once

#include <json.hpp>

#include <set>
#include <string>

#include "hitpro/common.hpp"

namespace hitpro {

using Json = nlohmann::json;

// Reads fields out of a JSON object and remembers which keys were consumed so
// leftovers can be rejected.
class JsonFields {
 public:
  JsonFields(const Json& obj, std::string context) : obj_(obj), context_(std::move(context)) {
    if (!obj_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + ": bad value for '" + key + "': " + e.what());
    }
  }

  bool has(const char* key) const {
    auto it = obj_.find(key);
    return it != obj_.end() && !it->is_null();
  }

  void skip(const char* key) { seen_.insert(key); }

  void reject_unknown() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(context_ + ": unknown key '" + it.key() + "'");
  }

 private:
  Json obj_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace hitpro
