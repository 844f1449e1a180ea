#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dvol {

// Exit codes used by the CLI; library code throws, the tool maps to codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
  static constexpr int exit_code = 2;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
  static constexpr int exit_code = 3;
};
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
  static constexpr int exit_code = 4;
};

// Summation in a fixed partition tree, independent of caller thread count.
// Also keeps rounding error at O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n <= 32) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum_shifted(std::span<const double> xs, double shift) {
  const std::size_t n = xs.size();
  if (n <= 32) {
    double s = 0.0;
    for (double x : xs) s += x - shift;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_shifted(xs.first(half), shift) +
         pairwise_sum_shifted(xs.subspan(half), shift);
}

// Two-pass mean with a residual correction step. The correction makes the
// mean of a constant series exact, so downstream deviations are true zeros.
inline double mean_of(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double first = pairwise_sum(xs) / n;
  return first + pairwise_sum_shifted(xs, first) / n;
}

// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

inline std::string format_int(std::int64_t v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

// Strict numeric parsing: the whole field must be consumed.
inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_int64(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

// FNV-1a, used for artifact checksums in stage manifests.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for checksum: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace dvol
