#pragma once

// Shared plumbing: stable hashing, seeded RNG, calendar dates, small string
// and file helpers. Everything here is deterministic across runs and
// platforms; std::hash and std:: distributions are deliberately avoided.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hypgen {

// ---------------------------------------------------------------------------
// hashing

// FNV-1a over bytes. Used for content checksums and seed derivation.
constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer; bijective scramble of a 64-bit value.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named seed derivation: one global seed fans out to per-stage streams.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return mix64(seed ^ fnv1a64(name));
}
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                                    std::uint64_t index) {
  return mix64(derive_seed(seed, name) ^ mix64(index));
}

std::uint64_t checksum_file(const std::string& path);  // throws if unreadable
std::string checksum_hex(std::uint64_t h);

// ---------------------------------------------------------------------------
// rng

// splitmix64 counter RNG. Small state, reproducible everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return mix64(state_++); }

  // [0, 1) with 53 bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n). n must be > 0.
  std::uint64_t bounded(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), k <= n, in draw order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// dates

// Calendar date, ISO-8601 `YYYY-MM-DD`.
struct Date {
  int y = 0, m = 0, d = 0;

  static std::optional<Date> parse(std::string_view s);
  std::string to_string() const;

  // Days since the civil epoch 1970-01-01; valid for the Gregorian calendar.
  long serial() const;
  static Date from_serial(long days);

  friend bool operator==(const Date& a, const Date& b) {
    return a.y == b.y && a.m == b.m && a.d == b.d;
  }
  friend bool operator<(const Date& a, const Date& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.m != b.m) return a.m < b.m;
    return a.d < b.d;
  }
  friend bool operator<=(const Date& a, const Date& b) { return a < b || a == b; }
};

// ---------------------------------------------------------------------------
// strings

std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// ---------------------------------------------------------------------------
// files

std::string read_text_file(const std::string& path);  // throws on failure
void write_text_file(const std::string& path, std::string_view content);
bool file_exists(const std::string& path);

}  // namespace hypgen
