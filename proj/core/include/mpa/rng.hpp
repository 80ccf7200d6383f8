#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace mpa {

/// splitmix64 finalizer: a bijective avalanche mix of one 64-bit word.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for an independent child stream:
/// splitmix64(splitmix64(seed) ^ golden * (index + 1)).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Deterministic random stream. Distributions are implemented here rather than
/// through <random> distribution objects, whose output is implementation-defined;
/// only the mt19937_64 engine (fully specified by the standard) is reused.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Child stream keyed by `tag`; independent of how much of this stream was consumed.
  RngStream child(std::uint64_t tag) const noexcept { return RngStream(mix_seed(seed_, tag)); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// lo + (hi - lo) * uniform(); returns lo exactly when lo == hi.
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; the sine variate is kept for the next call.
  double normal();
  bool bernoulli(double p);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;  // second Box-Muller variate
};

}  // namespace mpa
