#pragma once

#include <cstdint>
#include <vector>

#include "rdslab/dynamics.hpp"
#include "rdslab/measure.hpp"

namespace rdslab {

/// Integer visit counts of an orbit ensemble. Counts add exactly, so
/// ensembles split into orbit ranges merge to the same result in any order.
struct SojournCounts {
  Partition part;
  std::vector<std::uint64_t> visits;
  std::uint64_t orbits = 0;
  std::uint64_t clamp_events = 0;

  explicit SojournCounts(const Partition& p) : part(p), visits(p.size(), 0) {}

  SojournCounts& merge(const SojournCounts& other);
  std::uint64_t total() const;
  MeasureVector measure() const;
};

/// Visits of f^j(x, t), j = 0..n-1, for noise streams
/// first_orbit .. first_orbit + orbit_count - 1.
SojournCounts sojourn_point_counts(const PerturbedSystem& sys, const Point& x, const NoiseLevel& level, std::size_t n,
                                   const Partition& part, std::uint64_t seed, std::uint64_t first_orbit,
                                   std::uint64_t orbit_count);

/// Monte Carlo estimate of the sojourn measure of the perturbed orbits of x
/// over `samples` noise realizations of length n.
MeasureVector sojourn_point(const PerturbedSystem& sys, const Point& x, const NoiseLevel& level, std::size_t n,
                            std::size_t samples, const Partition& part, std::uint64_t seed);

/// Initial condition number `index` of an ensemble of `count` draws from the
/// normalized volume. Draws are stratified: on a 1D space stratum i is
/// [i/count, (i+1)/count); on the cylinder the first g*g draws
/// (g = floor(sqrt(count))) fill a g x g grid of strata and the rest are
/// plain uniform. Each draw is uniform within its stratum.
Point volume_sample(const StateSpace& space, std::size_t index, std::size_t count, std::uint64_t seed);

/// Ensemble over x_samples initial conditions (volume_sample) and `samples`
/// noise realizations each; orbit k = i * samples + s uses noise stream k.
SojournCounts sojourn_global_counts(const PerturbedSystem& sys, const NoiseLevel& level, std::size_t n,
                                    std::size_t x_samples, std::size_t samples, const Partition& part,
                                    std::uint64_t seed, std::size_t first_x = 0,
                                    std::size_t x_count = static_cast<std::size_t>(-1));

MeasureVector sojourn_global(const PerturbedSystem& sys, const NoiseLevel& level, std::size_t n,
                             std::size_t x_samples, std::size_t samples, const Partition& part, std::uint64_t seed);

}  // namespace rdslab
