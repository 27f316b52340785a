#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "rdslab/error.hpp"

namespace rdslab {

enum class SpaceKind { Circle, Interval, Cylinder };

/// A point of a phase space. One-dimensional spaces use only `x`.
/// Circle coordinates are canonical in [0,1); the cylinder's `y` lies in [-1,1].
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Phase space descriptor: the circle R/Z, a closed interval [a,b], or the
/// flat cylinder (R/Z) x [-1,1]. Volumes are normalized to total mass one.
///
/// Metrics:
///   circle    min(|p-q|, 1-|p-q|)
///   interval  |p-q| / (b-a)
///   cylinder  max(circle distance in x, |dy|/2)   (sup metric)
class StateSpace {
 public:
  static StateSpace circle() { return StateSpace(SpaceKind::Circle, 0.0, 1.0); }
  static StateSpace interval(double a, double b);
  static StateSpace cylinder() { return StateSpace(SpaceKind::Cylinder, -1.0, 1.0); }

  SpaceKind kind() const { return kind_; }
  int dim() const { return kind_ == SpaceKind::Cylinder ? 2 : 1; }

  /// Lower/upper bound of the non-periodic coordinate (interval: x, cylinder: y).
  double lower() const { return lo_; }
  double upper() const { return hi_; }

  std::string name() const;

  friend bool operator==(const StateSpace&, const StateSpace&) = default;

 private:
  StateSpace(SpaceKind kind, double lo, double hi) : kind_(kind), lo_(lo), hi_(hi) {}

  SpaceKind kind_;
  double lo_;
  double hi_;
};

/// Shortest arc between two circle coordinates.
double circle_distance(double a, double b);

double dist(const StateSpace& space, const Point& p, const Point& q);
/// Distance between points tagged with their spaces; throws "space mismatch"
/// unless both tags describe the same space.
double dist(const StateSpace& sp, const Point& p, const StateSpace& sq, const Point& q);

/// Canonicalize raw coordinates: periodic coordinates mod 1 into [0,1), bounded
/// coordinates clamped (projection). `clamped`, when non-null, is set to true if
/// a clamp actually moved a coordinate.
Point wrap(const StateSpace& space, double x, double y = 0.0, bool* clamped = nullptr);

/// Uniform partition into half-open boxes [a, a+w). On bounded axes the last
/// cell is closed on the right. Cells of the cylinder are numbered
/// row-major: index = ix + n_x * iy.
class Partition {
 public:
  Partition(StateSpace space, std::size_t nx, std::size_t ny = 1);

  const StateSpace& space() const { return space_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }

  /// Raw (coordinate-unit) cell extent along each axis.
  double raw_width_x() const;
  double raw_width_y() const;
  /// Cell width measured in the space's metric (largest over the axes).
  double metric_width() const;

  std::size_t cell_of(const Point& p) const;
  Point cell_center(std::size_t cell) const;
  /// Normalized volume, exactly 1/size().
  double cell_volume(std::size_t) const { return 1.0 / static_cast<double>(size()); }

  std::size_t ix(std::size_t cell) const { return cell % nx_; }
  std::size_t iy(std::size_t cell) const { return cell / nx_; }

  /// Lower-left corner of a cell in raw coordinates.
  Point cell_origin(std::size_t cell) const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::size_t axis_index(double v, double lo, double width, std::size_t n) const;

  StateSpace space_;
  std::size_t nx_;
  std::size_t ny_;
};

}  // namespace rdslab
