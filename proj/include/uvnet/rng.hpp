#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace uvnet {

/// SplitMix64 finalizer, used to derive independent seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a over a stream tag, so substreams can be named.
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seeded random stream. All variates used by the simulator are produced by
/// hand from raw 64-bit engine output so results do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  /// Independent stream for (seed, node, module); adding a node or module
  /// never perturbs the draws of another.
  static Rng substream(std::uint64_t seed, std::uint64_t node, std::string_view module) {
    return Rng(splitmix64(seed ^ splitmix64(node + 0x51ED270B27E5F3A1ULL)) ^ hash_tag(module));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  int bit() { return static_cast<int>(engine_() >> 63); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace uvnet
