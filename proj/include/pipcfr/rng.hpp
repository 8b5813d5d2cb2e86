#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pipcfr {

// Deterministic xoshiro256++ stream. All distributions are built on top of
// next_u64() rather than <random> distributions, so a given seed produces
// bit-identical draws regardless of the standard-library implementation.
//
// Named substreams let one root seed drive independent concerns (data
// generation, parameter init, batch shuffling) without the draw order of one
// perturbing another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Child stream keyed on (root seed, name); independent of this stream's
  // current position.
  Rng substream(std::string_view name) const;
  static std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  std::uint64_t bounded(std::uint64_t n);  // uniform in [0, n)
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  double laplace(double scale);  // location 0
  bool bernoulli(double p);

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t state_[4];
  std::uint64_t seed_ = 0;
};

}  // namespace pipcfr
