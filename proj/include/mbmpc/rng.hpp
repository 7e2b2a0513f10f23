#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace mbmpc {

// All randomness in the library flows through this wrapper so that runs are
// reproducible bit-for-bit from a single seed. Distribution sampling is
// hand-rolled (standard-library distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 bits of entropy.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  // Box-Muller with a cached spare.
  double gaussian(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Named sub-streams derived from one global seed. Components draw from their
// own stream, so changing how one of them consumes randomness does not
// reshuffle the others.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
  return detail::splitmix64(base ^ detail::fnv1a64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t a) {
  return detail::splitmix64(derive_seed(base, stream) ^ detail::splitmix64(a + 1));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t a,
                                 std::uint64_t b) {
  return detail::splitmix64(derive_seed(base, stream, a) ^ detail::splitmix64(b + 0x51ed2701));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t a,
                                 std::uint64_t b, std::uint64_t c) {
  return detail::splitmix64(derive_seed(base, stream, a, b) ^ detail::splitmix64(c + 0xa5a5a5a5));
}

}  // namespace mbmpc
