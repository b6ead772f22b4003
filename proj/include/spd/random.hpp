#pragma once

#include <cstdint>
#include <random>

namespace spd {

/// Seeded random stream with portable samplers.
///
/// Only the engine comes from <random>; every distribution is implemented
/// here so a given seed produces the same sequence with any standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, index), e.g. one per trial or per process.
  static RandomStream substream(std::uint64_t seed, std::uint64_t index);

  /// Uniform on the open interval (0, 1).
  double uniform();
  bool bernoulli(double p) { return uniform() < p; }
  double exponential(double mean);
  double normal();
  std::uint64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finaliser; used to derive substream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace spd
