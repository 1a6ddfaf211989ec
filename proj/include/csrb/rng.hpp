#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace csrb {

/// SplitMix64 generator. Small state, full 64-bit output, and trivially
/// reproducible across platforms, which is what the determinism contract
/// needs; statistical quality is more than enough for init and shuffles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal via Box-Muller (both draws consumed, one returned, so
  /// the stream position is input-independent).
  double normal();

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  /// Fisher-Yates shuffle of an index vector.
  void shuffle(std::vector<std::size_t>& idx);

  /// Independent child stream; (seed, name) -> child seed via a 64-bit FNV-1a
  /// hash of the name mixed into the parent seed. Same (seed, name) always
  /// yields the same stream regardless of draw order elsewhere.
  static Rng substream(std::uint64_t seed, const std::string& name);

 private:
  std::uint64_t state_;
};

}  // namespace csrb
