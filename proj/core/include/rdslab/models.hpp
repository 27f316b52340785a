#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rdslab/attractor.hpp"
#include "rdslab/dynamics.hpp"

namespace rdslab {

using ModelParams = std::map<std::string, double>;

/// A built-in system with its reference attractor data.
struct ModelSpec {
  std::string name;
  StateSpace space = StateSpace::circle();
  ModelParams params;
  std::shared_ptr<const DeterministicMap> map;
  std::vector<AttractorRef> refs;
  /// Largest noise level for which the documented behavior is expected.
  double eps_max = 0.0;

  PerturbedSystem system() const { return PerturbedSystem(map); }
};

/// Names accepted by load_model.
std::vector<std::string> model_names();

/// Builds a model by name, filling defaults for absent parameters, and runs
/// its load-time self-check (reference equilibria fixed within 1e-8 with the
/// declared stability type). Unknown names or parameters throw.
ModelSpec load_model(const std::string& name, const ModelParams& params = {});

// --- north-south circle map ------------------------------------------------

/// x - a sin(4 pi x) mod 1; requires 0 < a < 1/(4 pi).
double north_south_map(double x, double a);

// --- asymmetric two-sink circle map ----------------------------------------

/// x - a sin(2 pi x) - b sin(4 pi x) mod 1 (defaults a = 0.03, b = 0.05).
double asym_two_sink_map(double x, double a, double b);

struct FixedPoint {
  double x;
  double derivative;
  bool sink;
};

/// Fixed points of a circle lift found by sign-change scan plus bisection.
std::vector<FixedPoint> circle_fixed_points(const std::function<double(double)>& lift, std::size_t scan = 4096);

// --- circle map with infinitely many sinks ----------------------------------

/// Chart of the circle: s in [-1/pi, 1/pi) (endpoints glued) <-> x = (pi s + 1)/2.
double example1_x_of_s(double s);
double example1_s_of_x(double x);

/// phi'(s) for phi(s) = s^4 sin(1/s); phi'(0) = 0.
double example1_dphi(double s);

/// Time-one map of s' = -phi'(s) (sinks at local minima of phi), RK4 with
/// `substeps` fixed steps; trajectories crossing the glued endpoint are
/// split at the crossing time. Returns the continuous lift in circle units.
double example1_lift(double x, int substeps = 64);
inline double example1_map(double x) { return wrap(StateSpace::circle(), example1_lift(x)).x; }

struct Example1Sink {
  double s;        // position in the original chart
  double x;        // circle coordinate
  Arc basin;       // between the flanking sources
  double source_lo_s;
  double source_hi_s;
};

/// Number of critical-point branches u in (k pi, k pi + pi/2) with u < 1e8;
/// sinks beyond this are not resolvable in double precision.
std::size_t example1_sink_cap();

/// The k outermost sinks (branch j gives the sink +s_j for odd j and -s_j for
/// even j, where u_j = 1/s_j solves tan(u) = u/4), each paired with its
/// flanking sources. Throws when k exceeds example1_sink_cap().
std::vector<Example1Sink> example1_sinks(std::size_t k);

// --- planar flow with a heteroclinic cycle (cylinder) -----------------------

/// Energy H(x,y) = y^2/2 + (1 + cos(4 pi x))/(4 pi)^2 and its saddle level.
double bowen_energy(const Point& z);
double bowen_separatrix_level();

/// Vector field J grad H + c (H_sep - H) grad H with J(a,b) = (b,-a).
Point bowen_field(const Point& z, double c);

/// Time-one map, RK4 with `substeps` fixed steps.
Point bowen_map(const Point& z, double c = 4.0, int substeps = 128);

struct CriticalPoint {
  Point p;
  double hxx;
  double hyy;
  double hxy;
  bool saddle;
};

/// Two saddles of H in the fundamental domain, found by Newton on grad H = 0
/// and certified by an indefinite Hessian. Throws when Newton fails.
std::pair<CriticalPoint, CriticalPoint> bowen_saddles();
/// The two eye centers (definite Hessian); sources of the flow.
std::pair<CriticalPoint, CriticalPoint> bowen_sources();

/// Cells crossed by the level set H = H_sep.
SupportSet bowen_separatrix_cells(const Partition& part);

}  // namespace rdslab
