#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace crfu {

/// Deterministic PRNG (splitmix64-seeded xoshiro256**). All experiment
/// randomness flows from one seed through named substreams; nothing reads
/// ambient entropy, so identical seeds give identical runs byte for byte.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Substream derived from (seed, stream name): independent, reproducible,
  /// order-insensitive. Names follow "train", "poison", "shadow:3", ...
  static Rng substream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (pairs cached).
  float normal();
  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  float spare_ = 0.0f;
  bool has_spare_ = false;
};

/// FNV-1a 64-bit hash; used for substream derivation and config hashing.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace crfu
