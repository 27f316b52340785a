#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rdslab/rng.hpp"
#include "rdslab/space.hpp"

namespace rdslab {

/// A deterministic map f of a phase space onto itself.
class DeterministicMap {
 public:
  virtual ~DeterministicMap() = default;

  virtual const StateSpace& space() const = 0;

  /// Image of a canonical point; always canonical.
  virtual Point apply(const Point& p) const = 0;

  /// Continuous real lift of a one-dimensional map: on the circle
  /// wrap(lift(x)) == apply(x) and lift(x) - x is continuous and 1-periodic;
  /// on an interval lift == apply. Needed by the exact Ulam builder.
  virtual bool has_lift() const { return false; }
  virtual double lift(double x) const;

  virtual std::string name() const = 0;
};

/// One-dimensional map given by its continuous lift.
class LiftedMap : public DeterministicMap {
 public:
  LiftedMap(StateSpace space, std::string name, std::function<double(double)> lift);

  const StateSpace& space() const override { return space_; }
  Point apply(const Point& p) const override;
  bool has_lift() const override { return true; }
  double lift(double x) const override { return lift_(x); }
  std::string name() const override { return name_; }

 private:
  StateSpace space_;
  std::string name_;
  std::function<double(double)> lift_;
};

/// Circle rotation x -> x + angle (mod 1).
std::shared_ptr<const DeterministicMap> make_rotation(double angle);

/// Noise level epsilon. Always 0 <= epsilon < kMaxEpsilon.
class NoiseLevel {
 public:
  static constexpr double kMaxEpsilon = 0.25;

  explicit NoiseLevel(double epsilon);
  double epsilon() const { return eps_; }

 private:
  double eps_;
};

/// Additive perturbation vector t. One-dimensional spaces use `dx` only.
struct NoiseVector {
  double dx = 0.0;
  double dy = 0.0;
};

/// A deterministic map plus the additive noise family f_t(x) = wrap(f(x) + t),
/// t uniform on the closed radius-epsilon ball of R^dim.
class PerturbedSystem {
 public:
  explicit PerturbedSystem(std::shared_ptr<const DeterministicMap> map);

  const StateSpace& space() const { return map_->space(); }
  const DeterministicMap& map() const { return *map_; }
  std::shared_ptr<const DeterministicMap> map_ptr() const { return map_; }
  int noise_dim() const { return space().dim(); }

  Point deterministic(const Point& x) const { return map_->apply(x); }

 private:
  std::shared_ptr<const DeterministicMap> map_;
};

/// wrap(f(x) + t). Throws "noise exceeds level" when |t| > epsilon.
/// `clamped` is set when the bounded coordinate had to be projected back.
Point perturbed_step(const PerturbedSystem& sys, const Point& x, const NoiseVector& t, const NoiseLevel& level,
                     bool* clamped = nullptr);

/// Uniform draw on [-eps,eps] (dim 1) or on the closed disc of radius eps
/// (dim 2, rejection from the square; the x draw always precedes the y draw).
NoiseVector sample_noise(const NoiseLevel& level, int dim, Rng& rng);

/// RNG domain tags keep the noise stream of an orbit independent of the
/// stream used to draw its initial condition.
enum class StreamDomain : std::uint64_t { Noise = 1, InitialCondition = 2, UlamSampling = 3 };

struct OrbitSample {
  std::vector<Point> states;
  std::uint64_t seed = 0;
  std::uint64_t orbit_index = 0;
  double epsilon = 0.0;
  std::uint64_t clamp_events = 0;
};

/// Random orbit of n steps (n+1 states) driven by noise stream
/// (seed, orbit_index). Ensembles use orbit_index 0,1,2,... so orbit k of
/// any ensemble equals random_orbit(..., seed, k).
OrbitSample random_orbit(const PerturbedSystem& sys, const Point& x0, const NoiseLevel& level, std::size_t n,
                         std::uint64_t seed, std::uint64_t orbit_index = 0);

/// Constants K and xi for which one perturbed step reaches a full xi-ball
/// around the unperturbed image (distance in the flat Riemannian metric).
struct CoverageReport {
  int steps_k = 1;
  double radius_xi = 0.0;
  std::size_t grid_points_checked = 0;
  bool neighborhood_verified = false;
  /// One-step kernel has a density (uniform additive noise) - analytic.
  bool absolutely_continuous_kernel = true;
};

CoverageReport coverage_report(const PerturbedSystem& sys, const NoiseLevel& level);

}  // namespace rdslab
