#pragma once

#include <cstdint>

namespace atnl {

/// Deterministic splittable random stream (SplitMix64 core).
///
/// Every stochastic component of the library draws from one of these so that
/// a run is reproducible bit-for-bit from a single seed on one thread.
/// Independent substreams are derived with split(), never by sharing a
/// stream across components.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double next_double();

  /// Standard normal via Box-Muller; pairs are cached, so draws alternate
  /// between one and zero advances of the underlying stream.
  double next_gaussian();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n);

  /// Derive an independent stream. Distinct stream ids give decorrelated
  /// sequences; the parent stream is not advanced.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t state_;
  bool has_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

}  // namespace atnl
