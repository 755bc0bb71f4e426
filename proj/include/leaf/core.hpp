#pragma once

// Shared vocabulary: calendar days, error types, deterministic random streams
// and float formatting used across the toolkit.

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace leaf {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a schema or invariant (bad CSV, duplicate keys, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its declared range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation has no defined result for its input (empty slice, zero range).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Calendar days.

/// A calendar day, stored as the signed count of days since 1970-01-01.
/// Arithmetic stays in integers; conversion to civil dates happens only when
/// parsing or printing.
struct Day {
  std::int32_t value = 0;

  constexpr Day() = default;
  constexpr explicit Day(std::int32_t v) : value(v) {}

  friend constexpr auto operator<=>(Day, Day) = default;
  friend constexpr Day operator+(Day d, std::int32_t n) { return Day(d.value + n); }
  friend constexpr Day operator-(Day d, std::int32_t n) { return Day(d.value - n); }
  friend constexpr std::int32_t operator-(Day a, Day b) { return a.value - b.value; }
  constexpr Day& operator++() {
    ++value;
    return *this;
  }
};

inline std::chrono::year_month_day to_civil(Day d) {
  return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{d.value}}};
}

inline Day from_civil(int y, unsigned m, unsigned d) {
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date");
  return Day(static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
}

/// Parses yyyy-mm-dd.
inline Day parse_date(std::string_view s) {
  auto bad = [&] { return DataError("unparseable date '" + std::string(s) + "'"); };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    if (ec != std::errc{} || p != s.data() + pos + len) throw bad();
  };
  num(0, 4, y);
  num(5, 2, m);
  num(8, 2, d);
  try {
    return from_civil(y, m, d);
  } catch (const DataError&) {
    throw bad();
  }
}

inline std::string format_date(Day d) {
  const auto ymd = to_civil(d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Monday = 0 ... Sunday = 6.
inline int day_of_week(Day d) {
  const std::chrono::weekday wd{std::chrono::sys_days{std::chrono::days{d.value}}};
  return static_cast<int>((wd.c_encoding() + 6) % 7);
}

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// All sampling goes through SplitMix64-derived seeds feeding std::mt19937_64,
// whose output sequence is fixed by the standard. Distributions are computed
// here rather than with <random> distributions, whose algorithms are
// implementation-defined.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent seed for a named sub-stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
  return derive_seed(master, hash_string(name));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t index) {
  return derive_seed(derive_seed(master, name), index);
}

/// Random stream with portable uniform/normal/integer draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). Rejection sampling keeps it unbiased.
  std::size_t below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Number formatting.

/// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), p);
}

/// Fixed significant digits, for human-facing tables.
inline std::string format_sig(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace leaf
