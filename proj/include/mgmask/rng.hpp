#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace mgm {

// Counter-based generator: output i is a pure function of (seed, i), so the
// draw sequence is identical on every platform and streams can be forked
// without sharing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64();

  // Uniform in [0,1) with 53 random bits.
  double next_double();

  // Standard normal via Box-Muller; consumes two draws.
  double next_normal();

  // Unbiased uniform integer in [0,n), n > 0.
  std::uint64_t uniform_below(std::uint64_t n);

  // Independent stream derived from (seed, tag); the parent is unaffected.
  Rng fork(std::uint64_t tag) const;

  // k distinct indices in [0,n), uniform over k-subsets. Throws
  // ValidationError if k > n.
  std::vector<std::size_t> distinct_indices(std::size_t n, std::size_t k);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace mgm
