#pragma once

#include <cstdint>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctrkit {

// Input or configuration problems the caller can fix. The CLI maps these to
// exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure during training or evaluation (NaN loss and friends).
// CLI exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// splitmix64: the stable mixing function used everywhere a value has to be
// hashed reproducibly (fold assignment, A/B bucketing). std::hash gives no
// cross-run guarantee, so it is never used for anything persisted.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ splitmix64(v));
}

// FNV-1a over bytes; used for config and feature-spec fingerprints embedded
// in artifact files.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// --- small string helpers used by the CSV and config parsers ---

inline std::string strip(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::string t = strip(s);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(t, &pos);
    if (pos != t.size()) {
      // CSV exports often write integer ids as "123.0"; accept that form.
      double d = std::stod(t, &pos);
      if (pos != t.size() || d != std::floor(d)) return std::nullopt;
      return static_cast<std::int64_t>(d);
    }
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  std::string t = strip(s);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace ctrkit
