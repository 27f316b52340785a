#pragma once

#include <string>
#include <vector>

#include "rdslab/measure.hpp"

namespace rdslab {

/// Forward arc [lo, hi] of the circle (wrapping through 0 when lo > hi), or
/// a plain interval on bounded spaces.
struct Arc {
  double lo = 0.0;
  double hi = 0.0;

  double length() const;
  bool contains(double x) const;
};

/// Reference data for one attractor of the unperturbed map: the carrier
/// points (a sink, or the saddles of a heteroclinic set), the invariant
/// measure it supports as weights on those points, and, when known, its
/// deterministic basin.
struct AttractorRef {
  std::string id;
  std::string description;
  std::vector<Point> carrier;
  std::vector<double> weights;  // reference measure; same length as carrier
  std::vector<Arc> basin;       // empty when not available

  SupportSet carrier_cells(const Partition& part) const;
  MeasureVector reference_measure(const Partition& part) const;
  double basin_volume() const;
  bool in_basin(double x) const;
};

}  // namespace rdslab
