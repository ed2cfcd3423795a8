#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace ccopt::rng {

// Counter-based splittable generator: every draw is a pure hash of
// (key, counter), so per-agent substreams are independent of the order
// in which agents are visited.

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  // Derives a substream key from a seed and a path of identifiers
  // (agent index, field tag, retry counter, ...).
  static Stream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t key = mix64(seed);
    for (std::uint64_t part : path) {
      key = mix64(key ^ mix64(part + kGolden));
    }
    return Stream(key);
  }

  std::uint64_t next_u64() { return mix64(mix64(key_ + kGolden * ++counter_)); }

  // [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double gaussian() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ccopt::rng
