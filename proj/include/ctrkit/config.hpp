#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ctrkit/common.hpp"

namespace ctrkit {

// Key-value text configuration. Lines are `key = value`; `[section]` headers
// prefix the following keys as `section.key`; `#` starts a comment. Flag
// overrides win over file values.
class Config {
 public:
  Config() = default;

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    Config c;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string s = strip(line);
      if (auto pos = s.find('#'); pos != std::string::npos) s = strip(s.substr(0, pos));
      if (s.empty()) continue;
      if (s.front() == '[' && s.back() == ']') {
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ValidationError("config " + path + ": line " + std::to_string(line_no) +
                              " is not `key = value`");
      }
      const std::string key = strip(s.substr(0, eq));
      const std::string value = strip(s.substr(eq + 1));
      require(!key.empty(), "config: empty key at line " + std::to_string(line_no));
      c.values_[section.empty() ? key : section + "." + key] = value;
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::string require_str(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), "config: missing required key " + key);
    return it->second;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    auto v = parse_int(it->second);
    require(v.has_value(), "config: key " + key + " is not an integer");
    return *v;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    auto v = parse_double(it->second);
    require(v.has_value(), "config: key " + key + " is not a number");
    return *v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError("config: key " + key + " is not a boolean");
  }

  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    for (const auto& part : split(it->second, ',')) {
      auto v = parse_int(part);
      require(v.has_value(), "config: key " + key + " has a non-integer entry");
      out.push_back(static_cast<int>(*v));
    }
    return out;
  }

  // Canonical sorted dump; its FNV-1a fingerprint is embedded in every
  // artifact this configuration produces.
  std::string canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
    return os.str();
  }
  std::uint64_t hash() const { return fnv1a64(canonical()); }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ctrkit
