#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rdslab/space.hpp"

namespace rdslab {

/// Probability vector over the cells of a partition (a discretized measure).
/// Construction rejects negative or non-finite entries and renormalizes.
class MeasureVector {
 public:
  MeasureVector(Partition part, std::vector<double> mass);

  static MeasureVector dirac(const Partition& part, std::size_t cell);
  static MeasureVector dirac(const Partition& part, const Point& p) { return dirac(part, part.cell_of(p)); }
  static MeasureVector uniform(const Partition& part);

  const Partition& partition() const { return part_; }
  const std::vector<double>& mass() const { return mass_; }
  double operator[](std::size_t cell) const { return mass_[cell]; }
  std::size_t size() const { return mass_.size(); }

  /// Midpoint-rule integral of a test function.
  double integrate(const std::function<double(const Point&)>& phi) const;

 private:
  Partition part_;
  std::vector<double> mass_;
};

/// Cells carrying mass above threshold * (maximum cell mass).
struct SupportSet {
  Partition part;
  std::vector<std::size_t> cells;  // sorted ascending
  double threshold = 0.0;

  bool contains(std::size_t cell) const;
  bool empty() const { return cells.empty(); }
};

inline constexpr double kSupportThreshold = 1e-6;

SupportSet support_of(const MeasureVector& mu, double threshold = kSupportThreshold);

/// Cell set built from explicit indices (sorted, deduplicated).
SupportSet make_support(const Partition& part, std::vector<std::size_t> cells);

/// Wasserstein-1 distance between measures on the same partition, mass
/// placed at cell centers.
///   circle:   w * min_c sum_k |D_k - c|, D the CDF difference (optimal
///             rotation of the CDF; the minimizer is a median of D)
///   interval: (1/n) * sum_k |D_k|
///   cylinder: bounded-Lipschitz surrogate, see bl_distance
double w1_distance(const MeasureVector& mu, const MeasureVector& nu);

/// A Lipschitz-1 test function with a human-readable label.
struct TestFunction {
  std::string label;
  std::function<double(const Point&)> phi;
};

/// Fixed dictionary of 32 Lipschitz-1 test functions for a space.
///   cylinder (u = (y+1)/2, so the metric is the sup metric in (x,u)):
///     sin/cos(2 pi k x)/(2 pi k), k=1..4                       (8)
///     sin/cos(pi k u)/(pi k), k=1..4                           (8)
///     trig(2 pi k x) * trig(pi l u) / (2 pi k + pi l), k,l=1,2 (16)
///   circle:   sin/cos(2 pi k x)/(2 pi k), k=1..16
///   interval: cos/sin(pi k s)/(pi k) with s the normalized coordinate, k=1..16
const std::vector<TestFunction>& test_dictionary(const StateSpace& space);

/// max over the dictionary of |int phi dmu - int phi dnu|.
double bl_distance(const MeasureVector& mu, const MeasureVector& nu);

/// Symmetric Hausdorff distance between two cell sets, measured between cell
/// centers in the space's metric. Throws "empty support" on empty input.
double hausdorff(const SupportSet& a, const SupportSet& b);

/// Directed part: max over a in A of the distance from a to B.
double directed_hausdorff(const SupportSet& a, const SupportSet& b);

/// Largest center-to-center distance within the set.
double support_diameter(const SupportSet& s);

/// CSV with header `cell_index,center_coords,mass`; 2D centers are written
/// as "x y" in one field; all reals at 17 significant digits.
void write_measure_csv(std::ostream& os, const MeasureVector& mu);
void write_measure_csv(const std::string& path, const MeasureVector& mu);
MeasureVector read_measure_csv(std::istream& is, const Partition& part);

}  // namespace rdslab
