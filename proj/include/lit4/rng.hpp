#pragma once

#include <cstdint>

namespace lit4 {

/// Counter-based generator built on the SplitMix64 finalizer.
///
/// Output number `n` of a stream is `mix(key + (n + 1) * 0x9E3779B97F4A7C15)`
/// with `key = mix(seed ^ mix(stream))`, where `mix` is the SplitMix64
/// finalizer. Any draw can be recomputed from (seed, stream, n) alone, which
/// is what makes dropout masks and initializations reproducible across runs
/// and implementations.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  static std::uint64_t mix(std::uint64_t z);

  /// Stateless access to draw `counter` of the stream identified by `key`.
  static std::uint64_t at(std::uint64_t key, std::uint64_t counter) {
    return mix(key + (counter + 1) * kGamma);
  }
  /// Uniform double in [0, 1) with 53 random bits.
  static double uniform_at(std::uint64_t key, std::uint64_t counter) {
    return static_cast<double>(at(key, counter) >> 11) * 0x1.0p-53;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return at(key_, counter_++); }
  double uniform() { return uniform_at(key_, counter_++); }
  /// Integer uniform in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (consumes two draws).
  double normal();
  /// Normal with standard deviation `stddev`, resampled until |x| <= 2*stddev.
  double truncated_normal(double stddev);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lit4
