#include "rdslab/sojourn.hpp"

#include <cmath>

#include "rdslab/parallel.hpp"

namespace rdslab {

SojournCounts& SojournCounts::merge(const SojournCounts& other) {
  if (!(part == other.part)) throw Error("partition mismatch");
  for (std::size_t i = 0; i < visits.size(); ++i) visits[i] += other.visits[i];
  orbits += other.orbits;
  clamp_events += other.clamp_events;
  return *this;
}

std::uint64_t SojournCounts::total() const {
  std::uint64_t t = 0;
  for (auto v : visits) t += v;
  return t;
}

MeasureVector SojournCounts::measure() const {
  std::vector<double> m(visits.begin(), visits.end());
  return {part, std::move(m)};
}

namespace {

void accumulate_orbit(const PerturbedSystem& sys, Point x, const NoiseLevel& level, std::size_t n, Rng& rng,
                      SojournCounts& out) {
  const int dim = sys.noise_dim();
  for (std::size_t j = 0; j < n; ++j) {
    ++out.visits[out.part.cell_of(x)];
    if (j + 1 == n) break;
    bool clamped = false;
    x = perturbed_step(sys, x, sample_noise(level, dim, rng), level, &clamped);
    out.clamp_events += clamped ? 1 : 0;
  }
  ++out.orbits;
}

void check_budget(std::size_t n, std::size_t samples) {
  if (n < 1) throw Error("sojourn length n must be >= 1");
  if (samples < 1) throw Error("sample count must be >= 1");
}

}  // namespace

SojournCounts sojourn_point_counts(const PerturbedSystem& sys, const Point& x, const NoiseLevel& level, std::size_t n,
                                   const Partition& part, std::uint64_t seed, std::uint64_t first_orbit,
                                   std::uint64_t orbit_count) {
  check_budget(n, 1);
  if (!(part.space() == sys.space())) throw Error("space mismatch");
  std::vector<SojournCounts> partial;
  const std::size_t workers = std::min<std::size_t>(worker_count(), orbit_count);
  partial.assign(std::max<std::size_t>(workers, 1), SojournCounts(part));
  parallel_chunks(
      orbit_count,
      [&](std::size_t b, std::size_t e, std::size_t w) {
        for (std::size_t k = b; k < e; ++k) {
          Rng rng(seed, first_orbit + k, static_cast<std::uint64_t>(StreamDomain::Noise));
          accumulate_orbit(sys, x, level, n, rng, partial[w]);
        }
      },
      workers);
  SojournCounts out(part);
  for (const auto& p : partial) out.merge(p);
  return out;
}

MeasureVector sojourn_point(const PerturbedSystem& sys, const Point& x, const NoiseLevel& level, std::size_t n,
                            std::size_t samples, const Partition& part, std::uint64_t seed) {
  check_budget(n, samples);
  return sojourn_point_counts(sys, x, level, n, part, seed, 0, samples).measure();
}

Point volume_sample(const StateSpace& space, std::size_t index, std::size_t count, std::uint64_t seed) {
  Rng rng(seed, index, static_cast<std::uint64_t>(StreamDomain::InitialCondition));
  const double u = rng.uniform();
  const double v = rng.uniform();
  if (space.dim() == 1) {
    const double s = (static_cast<double>(index) + u) / static_cast<double>(count);
    const double x = space.kind() == SpaceKind::Interval ? space.lower() + s * (space.upper() - space.lower()) : s;
    return wrap(space, x);
  }
  const auto g = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(count))));
  double sx = u;
  double sy = v;
  if (index < g * g) {
    sx = (static_cast<double>(index % g) + u) / static_cast<double>(g);
    sy = (static_cast<double>(index / g) + v) / static_cast<double>(g);
  }
  return wrap(space, sx, space.lower() + sy * (space.upper() - space.lower()));
}

SojournCounts sojourn_global_counts(const PerturbedSystem& sys, const NoiseLevel& level, std::size_t n,
                                    std::size_t x_samples, std::size_t samples, const Partition& part,
                                    std::uint64_t seed, std::size_t first_x, std::size_t x_count) {
  check_budget(n, samples);
  if (x_samples < 1) throw Error("x_samples must be >= 1");
  if (!(part.space() == sys.space())) throw Error("space mismatch");
  x_count = std::min(x_count, x_samples - std::min(first_x, x_samples));
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(worker_count(), x_count));
  std::vector<SojournCounts> partial(workers, SojournCounts(part));
  parallel_chunks(
      x_count,
      [&](std::size_t b, std::size_t e, std::size_t w) {
        for (std::size_t k = b; k < e; ++k) {
          const std::size_t i = first_x + k;
          const Point x0 = volume_sample(sys.space(), i, x_samples, seed);
          for (std::size_t s = 0; s < samples; ++s) {
            Rng rng(seed, i * samples + s, static_cast<std::uint64_t>(StreamDomain::Noise));
            accumulate_orbit(sys, x0, level, n, rng, partial[w]);
          }
        }
      },
      workers);
  SojournCounts out(part);
  for (const auto& p : partial) out.merge(p);
  return out;
}

MeasureVector sojourn_global(const PerturbedSystem& sys, const NoiseLevel& level, std::size_t n,
                             std::size_t x_samples, std::size_t samples, const Partition& part, std::uint64_t seed) {
  return sojourn_global_counts(sys, level, n, x_samples, samples, part, seed).measure();
}

}  // namespace rdslab
