#include "rdslab/attractor.hpp"

#include <cmath>

namespace rdslab {

double Arc::length() const {
  double d = hi - lo;
  if (d < 0.0) d += 1.0;
  return d;
}

bool Arc::contains(double x) const {
  if (lo <= hi) return x >= lo && x <= hi;
  return x >= lo || x <= hi;
}

SupportSet AttractorRef::carrier_cells(const Partition& part) const {
  std::vector<std::size_t> cells;
  cells.reserve(carrier.size());
  for (const Point& p : carrier) cells.push_back(part.cell_of(p));
  return make_support(part, std::move(cells));
}

MeasureVector AttractorRef::reference_measure(const Partition& part) const {
  if (carrier.empty() || carrier.size() != weights.size()) throw Error("attractor reference needs weighted carrier");
  std::vector<double> mass(part.size(), 0.0);
  for (std::size_t k = 0; k < carrier.size(); ++k) mass[part.cell_of(carrier[k])] += weights[k];
  return {part, std::move(mass)};
}

double AttractorRef::basin_volume() const {
  double v = 0.0;
  for (const Arc& a : basin) v += a.length();
  return v;
}

bool AttractorRef::in_basin(double x) const {
  for (const Arc& a : basin) {
    if (a.contains(x)) return true;
  }
  return false;
}

}  // namespace rdslab
