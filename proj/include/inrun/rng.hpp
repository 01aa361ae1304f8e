#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "inrun/tensor.hpp"

namespace inrun {

/// Counter-based generator: the i-th draw is a pure function of (key, i).
///
/// The key is derived from the seed with the SplitMix64 finalizer; each draw
/// hashes key ^ mix(counter). Streams for (seed, step, sample) triples are
/// obtained with derive(), which never touches the parent's counter, so
/// sub-streams are independent of the order in which they are requested.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Standard normal via Box-Muller on two uniforms (one draw per pair is discarded).
  double gaussian();
  /// Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream keyed by the given integers.
  Rng derive(std::initializer_list<std::uint64_t> keys) const;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

Tensor gaussian(Rng& rng, std::vector<std::size_t> shape);
Tensor uniform(Rng& rng, std::vector<std::size_t> shape);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

}  // namespace inrun
