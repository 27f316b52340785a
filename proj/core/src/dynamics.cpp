#include "rdslab/dynamics.hpp"

#include <cmath>
#include <numbers>

namespace rdslab {

double DeterministicMap::lift(double) const { throw Error("map " + name() + " has no continuous lift"); }

LiftedMap::LiftedMap(StateSpace space, std::string name, std::function<double(double)> lift)
    : space_(space), name_(std::move(name)), lift_(std::move(lift)) {
  if (space_.dim() != 1) throw Error("lifted maps are one-dimensional");
}

Point LiftedMap::apply(const Point& p) const { return wrap(space_, lift_(p.x)); }

std::shared_ptr<const DeterministicMap> make_rotation(double angle) {
  return std::make_shared<LiftedMap>(StateSpace::circle(), "rotation", [angle](double x) { return x + angle; });
}

NoiseLevel::NoiseLevel(double epsilon) : eps_(epsilon) {
  if (!std::isfinite(epsilon) || epsilon < 0.0) throw Error("invalid noise level");
  if (epsilon >= kMaxEpsilon) throw Error("noise level above supported maximum 0.25");
}

PerturbedSystem::PerturbedSystem(std::shared_ptr<const DeterministicMap> map) : map_(std::move(map)) {
  if (!map_) throw Error("perturbed system needs a map");
}

namespace {

bool within_ball(const NoiseVector& t, double eps, int dim) {
  if (dim == 1) return std::fabs(t.dx) <= eps && t.dy == 0.0;
  return t.dx * t.dx + t.dy * t.dy <= eps * eps;
}

}  // namespace

Point perturbed_step(const PerturbedSystem& sys, const Point& x, const NoiseVector& t, const NoiseLevel& level,
                     bool* clamped) {
  if (!within_ball(t, level.epsilon(), sys.noise_dim())) throw Error("noise exceeds level");
  const Point fx = sys.deterministic(x);
  if (t.dx == 0.0 && t.dy == 0.0) return fx;
  return wrap(sys.space(), fx.x + t.dx, fx.y + t.dy, clamped);
}

NoiseVector sample_noise(const NoiseLevel& level, int dim, Rng& rng) {
  const double eps = level.epsilon();
  if (eps == 0.0) return {};
  if (dim == 1) return {eps * (2.0 * rng.uniform() - 1.0), 0.0};
  for (;;) {
    const double a = eps * (2.0 * rng.uniform() - 1.0);
    const double b = eps * (2.0 * rng.uniform() - 1.0);
    if (a * a + b * b <= eps * eps) return {a, b};
  }
}

OrbitSample random_orbit(const PerturbedSystem& sys, const Point& x0, const NoiseLevel& level, std::size_t n,
                         std::uint64_t seed, std::uint64_t orbit_index) {
  OrbitSample out;
  out.seed = seed;
  out.orbit_index = orbit_index;
  out.epsilon = level.epsilon();
  out.states.reserve(n + 1);
  out.states.push_back(x0);
  Rng rng(seed, orbit_index, static_cast<std::uint64_t>(StreamDomain::Noise));
  Point x = x0;
  for (std::size_t j = 0; j < n; ++j) {
    const NoiseVector t = sample_noise(level, sys.noise_dim(), rng);
    bool clamped = false;
    x = perturbed_step(sys, x, t, level, &clamped);
    out.clamp_events += clamped ? 1 : 0;
    out.states.push_back(x);
  }
  return out;
}

CoverageReport coverage_report(const PerturbedSystem& sys, const NoiseLevel& level) {
  const double eps = level.epsilon();
  if (eps == 0.0) throw Error("degenerate noise");

  CoverageReport rep;
  rep.steps_k = 1;
  rep.radius_xi = eps;

  // Probe the boundary of the xi-ball around f(x) on a grid of base points
  // and check every probe is reached by an admissible noise vector.
  const StateSpace& sp = sys.space();
  const Partition grid(sp, 32, sp.dim() == 2 ? 32 : 1);
  std::vector<NoiseVector> probes;
  const double r = rep.radius_xi * (1.0 - 1e-12);
  if (sp.dim() == 1) {
    probes = {{r, 0.0}, {-r, 0.0}};
  } else {
    constexpr int kDirections = 16;
    for (int k = 0; k < kDirections; ++k) {
      const double th = 2.0 * std::numbers::pi * k / kDirections;
      probes.push_back({r * std::cos(th), r * std::sin(th)});
    }
  }
  bool ok = true;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const Point x = grid.cell_center(c);
    const Point fx = sys.deterministic(x);
    for (const NoiseVector& t : probes) {
      bool clamped = false;
      const Point target = wrap(sp, fx.x + t.dx, fx.y + t.dy, &clamped);
      if (clamped) continue;  // probe lies outside M
      const Point reached = perturbed_step(sys, x, t, level);
      const double step = sp.dim() == 2 ? std::hypot(circle_distance(target.x, fx.x), target.y - fx.y)
                                        : std::fabs(t.dx);
      ok = ok && dist(sp, reached, target) <= 1e-12 && step <= eps;
    }
    ++rep.grid_points_checked;
  }
  rep.neighborhood_verified = ok;
  return rep;
}

}  // namespace rdslab
