#pragma once

// Seeded, splittable pseudo-random stream. One stream per thread of
// execution; replicate streams come from split(index), which is a pure
// function of the parent seed and the index.

#include <cstdint>
#include <random>

namespace smallsphere {

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream determined by (seed, index) alone.
  RngStream split(std::uint64_t index) const;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Standard normal (Marsaglia polar method).
  double normal();

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer, used for seeding.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace smallsphere
