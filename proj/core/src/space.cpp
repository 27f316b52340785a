#include "rdslab/space.hpp"

#include <algorithm>
#include <cmath>

namespace rdslab {

StateSpace StateSpace::interval(double a, double b) {
  if (!(std::isfinite(a) && std::isfinite(b)) || !(a < b)) {
    throw Error("invalid interval bounds");
  }
  return StateSpace(SpaceKind::Interval, a, b);
}

std::string StateSpace::name() const {
  switch (kind_) {
    case SpaceKind::Circle:
      return "circle";
    case SpaceKind::Interval:
      return "interval";
    case SpaceKind::Cylinder:
      return "cylinder";
  }
  return "unknown";
}

double circle_distance(double a, double b) {
  double d = std::fabs(a - b);
  d -= std::floor(d);
  return std::min(d, 1.0 - d);
}

double dist(const StateSpace& space, const Point& p, const Point& q) {
  switch (space.kind()) {
    case SpaceKind::Circle:
      return circle_distance(p.x, q.x);
    case SpaceKind::Interval:
      return std::fabs(p.x - q.x) / (space.upper() - space.lower());
    case SpaceKind::Cylinder:
      return std::max(circle_distance(p.x, q.x), 0.5 * std::fabs(p.y - q.y));
  }
  throw Error("space mismatch");
}

double dist(const StateSpace& sp, const Point& p, const StateSpace& sq, const Point& q) {
  if (!(sp == sq)) throw Error("space mismatch");
  return dist(sp, p, q);
}

namespace {

double mod1(double v) {
  double r = v - std::floor(v);
  // v slightly below an integer rounds up to exactly 1.0
  return r >= 1.0 ? 0.0 : r;
}

double clamp_to(double v, double lo, double hi, bool* clamped) {
  if (v < lo || v > hi) {
    if (clamped != nullptr) *clamped = true;
    return std::clamp(v, lo, hi);
  }
  return v;
}

}  // namespace

Point wrap(const StateSpace& space, double x, double y, bool* clamped) {
  if (!std::isfinite(x) || !std::isfinite(y)) throw Error("non-finite coordinate");
  switch (space.kind()) {
    case SpaceKind::Circle:
      return {mod1(x), 0.0};
    case SpaceKind::Interval:
      return {clamp_to(x, space.lower(), space.upper(), clamped), 0.0};
    case SpaceKind::Cylinder:
      return {mod1(x), clamp_to(y, space.lower(), space.upper(), clamped)};
  }
  throw Error("space mismatch");
}

Partition::Partition(StateSpace space, std::size_t nx, std::size_t ny)
    : space_(space), nx_(nx), ny_(space.dim() == 1 ? 1 : ny) {
  if (nx_ == 0 || ny_ == 0) throw Error("partition needs at least one cell per axis");
  if (space.dim() == 1 && ny != 1) throw Error("one-dimensional partition takes a single resolution");
}

double Partition::raw_width_x() const {
  if (space_.kind() == SpaceKind::Interval) {
    return (space_.upper() - space_.lower()) / static_cast<double>(nx_);
  }
  return 1.0 / static_cast<double>(nx_);
}

double Partition::raw_width_y() const {
  if (space_.kind() != SpaceKind::Cylinder) return 0.0;
  return (space_.upper() - space_.lower()) / static_cast<double>(ny_);
}

double Partition::metric_width() const {
  const double wx = 1.0 / static_cast<double>(nx_);
  if (space_.kind() != SpaceKind::Cylinder) return wx;
  return std::max(wx, 0.5 * raw_width_y());
}

std::size_t Partition::axis_index(double v, double lo, double span, std::size_t n) const {
  const double t = (v - lo) * static_cast<double>(n) / span;
  if (!(t > 0.0)) return 0;
  const auto i = static_cast<std::size_t>(std::floor(t));
  return std::min(i, n - 1);
}

std::size_t Partition::cell_of(const Point& p) const {
  switch (space_.kind()) {
    case SpaceKind::Circle:
      return axis_index(p.x, 0.0, 1.0, nx_);
    case SpaceKind::Interval:
      return axis_index(p.x, space_.lower(), space_.upper() - space_.lower(), nx_);
    case SpaceKind::Cylinder: {
      const std::size_t i = axis_index(p.x, 0.0, 1.0, nx_);
      const std::size_t j = axis_index(p.y, space_.lower(), space_.upper() - space_.lower(), ny_);
      return i + nx_ * j;
    }
  }
  return 0;
}

Point Partition::cell_origin(std::size_t cell) const {
  const double fx = static_cast<double>(ix(cell));
  switch (space_.kind()) {
    case SpaceKind::Circle:
      return {fx / static_cast<double>(nx_), 0.0};
    case SpaceKind::Interval:
      return {space_.lower() + fx * raw_width_x(), 0.0};
    case SpaceKind::Cylinder:
      return {fx / static_cast<double>(nx_),
              space_.lower() + static_cast<double>(iy(cell)) * raw_width_y()};
  }
  return {};
}

Point Partition::cell_center(std::size_t cell) const {
  Point o = cell_origin(cell);
  o.x += 0.5 * raw_width_x();
  if (space_.kind() == SpaceKind::Cylinder) o.y += 0.5 * raw_width_y();
  return o;
}

}  // namespace rdslab
