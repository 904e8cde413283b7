#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cephmark {

// Shape/precondition violations: caller handed us something structurally wrong.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf detected where the contract requires finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown key, out-of-range value, missing file).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (annotation line, image header, checkpoint magic).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// round-half-up; translation-consistent under integer shifts, unlike
// round-half-away-from-zero.
inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

// Deterministic RNG. mt19937_64 has a standard-pinned sequence; the value
// derivations below are explicit so streams do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double next_double() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(eng_());  // full 64-bit range
    // multiply-shift bound; bias ~ span / 2^64, immeasurable for our ranges
    uint64_t x = eng_();
    __uint128_t m = static_cast<__uint128_t>(x) * span;
    return lo + static_cast<int64_t>(m >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // independent child stream, for per-component seeding
  uint64_t derive() { return eng_(); }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<int64_t>(last - first);
    for (int64_t i = n - 1; i > 0; --i) {
      int64_t j = uniform_int(0, i);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace detail {
inline int& thread_count_ref() {
  static int n = []() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return n;
}
}  // namespace detail

inline void set_num_threads(int n) { detail::thread_count_ref() = n < 1 ? 1 : n; }
inline int num_threads() { return detail::thread_count_ref(); }

// Runs body(begin, end) over a block partition of [0, n). Each index is
// handled by exactly one thread, so any per-index sequential reduction stays
// bitwise deterministic regardless of the thread count.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
  int nt = num_threads();
  if (nt <= 1 || n < 2) {
    body(0, n);
    return;
  }
  int blocks = static_cast<int>(std::min<int64_t>(nt, n));
  int64_t chunk = (n + blocks - 1) / blocks;
  std::vector<std::thread> workers;
  workers.reserve(blocks - 1);
  for (int b = 1; b < blocks; ++b) {
    int64_t lo = b * chunk;
    int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&body, lo, hi]() { body(lo, hi); });
  }
  body(0, std::min<int64_t>(n, chunk));
  for (auto& w : workers) w.join();
}

// FNV-1a, used for artifact checksums in manifests.
inline uint64_t fnv1a64(const void* data, size_t size, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace cephmark
