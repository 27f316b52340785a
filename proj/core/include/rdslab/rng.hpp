#pragma once

#include <cstdint>
#include <random>

namespace rdslab {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under master seed `seed`, optionally in a separate
/// `domain` (e.g. initial conditions vs noise). A pure function of its
/// arguments, so ensembles may be split across workers in any order.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t domain = 0) {
  return splitmix64(seed ^ splitmix64(index ^ splitmix64(domain + 0x632be59bd9b4e019ULL)));
}

/// Random stream: std::mt19937_64 (output sequence fixed by the standard)
/// with a hand-rolled 53-bit double conversion so draws are bit-identical
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t index, std::uint64_t domain = 0)
      : engine_(stream_seed(seed, index, domain)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0,1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rdslab
