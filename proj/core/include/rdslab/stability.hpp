#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdslab/attractor.hpp"
#include "rdslab/models.hpp"
#include "rdslab/ulam.hpp"

namespace rdslab {

// --- class matching ---------------------------------------------------------

enum class ClassStatus { Matched, Merged, Spurious };
std::string to_string(ClassStatus s);

struct ClassMatch {
  ClassStatus status = ClassStatus::Spurious;
  std::vector<std::size_t> refs;  // indices of refs whose carrier lies in the class
};

struct Assignment {
  std::vector<ClassMatch> classes;   // parallel to decomposition.classes
  std::vector<int> class_of_ref;     // matched class per ref, or -1
  std::size_t matched_count() const;
};

/// Containment matching: a class is matched to the single reference whose
/// carrier cells it contains. Classes holding several carriers are merged,
/// classes holding none are spurious. A carrier spread over two classes
/// throws "carrier split".
Assignment match_classes(const RecurrentDecomposition& dec, std::span<const AttractorRef> refs, const Partition& part);

// --- sweep ------------------------------------------------------------------

/// Cell width = epsilon / cells_per_eps on each axis, with the per-axis cell
/// count clamped to [min_cells, max_cells].
struct PartitionPolicy {
  double cells_per_eps = 8.0;
  std::size_t min_cells = 8;
  std::size_t max_cells = 1u << 16;

  Partition make(const StateSpace& space, double epsilon) const;
};

/// Monte Carlo cross-check budget for sojourn_global; n == 0 disables it.
struct MonteCarloBudget {
  std::size_t n = 0;
  std::size_t samples = 1;
  std::size_t x_samples = 1;
};

struct SweepOptions {
  PartitionPolicy policy;
  MonteCarloBudget mc;
  UlamOptions ulam;
  std::uint64_t seed = 0;
  /// Report directory; empty keeps everything in memory.
  std::string out_dir;
  /// Serialized JSON object embedded verbatim as "config" in report.json.
  std::string config_json = "{}";
  std::string model_name;
};

struct ClassRecord {
  std::vector<std::size_t> cells;
  ClassMatch match;
  double beta = 0.0;
  /// Against the matched reference only; NaN otherwise.
  double w1_ref = std::numeric_limits<double>::quiet_NaN();
  double hausdorff_ref = std::numeric_limits<double>::quiet_NaN();
  MeasureVector measure{Partition(StateSpace::circle(), 1), {1.0}};
  SupportSet support{Partition(StateSpace::circle(), 1), {}, 0.0};
  std::string measure_file;
};

struct EpsilonRecord {
  double epsilon = 0.0;
  Partition part{StateSpace::circle(), 1};
  std::size_t l = 0;
  std::vector<ClassRecord> classes;
  std::vector<int> class_of_ref;
  std::vector<double> beta;
  MeasureVector assembled{Partition(StateSpace::circle(), 1), {1.0}};
  AbsorptionTable absorption;

  // Monte Carlo leg; distance is NaN when disabled
  std::string mc_metric;
  double mc_distance = std::numeric_limits<double>::quiet_NaN();
  double mc_tolerance = 0.0;
  std::uint64_t mc_clamp_events = 0;

  std::uint64_t ulam_clamp_events = 0;
  std::size_t nnz = 0;
  /// Per reference with a two-point carrier: dictionary distance of the
  /// assembled measure from the segment between the two Dirac masses.
  std::vector<double> hull_distance;

  // diagnostics
  double row_sum_error = 0.0;
  double absorption_sum_error = 0.0;
  double harmonic_error = 0.0;
  double class_leakage = 0.0;
  bool classes_disjoint = true;
  bool indicator_ok = true;
  std::size_t min_class_cells = 0;

  std::string dir;

  bool mc_pass() const { return !(mc_distance > mc_tolerance); }
  bool checks_pass() const;
};

struct SweepReport {
  std::string model_name;
  std::vector<AttractorRef> refs;
  std::vector<double> epsilons;
  std::vector<EpsilonRecord> records;
  bool complete = false;

  bool checks_pass() const;
};

/// Runs the descending sweep. Each epsilon builds the Ulam model, matches its
/// classes, computes weights, distances to the references, the assembled
/// measure, and the optional Monte Carlo cross-check. With an output
/// directory, eps_<value>/ holds the CSV artifacts and report.json is
/// rewritten atomically after every epsilon (complete=false until the end).
SweepReport run_sweep(const PerturbedSystem& sys, std::span<const AttractorRef> refs,
                      std::span<const double> epsilons, const SweepOptions& opts);

/// The JSON summary of a report (the content of report.json).
std::string report_json(const SweepReport& report, const SweepOptions& opts);

// --- thresholds -------------------------------------------------------------

enum class ThresholdKind { Interval, Censored, BelowRange };

/// Interval: threshold in (lo, hi] (lo = smallest epsilon of the good
/// suffix's top, hi = first failing epsilon above it). Censored: good at
/// every swept epsilon, threshold >= lo. BelowRange: not matched at the
/// smallest epsilon.
struct ThresholdEstimate {
  std::string ref_id;
  ThresholdKind kind = ThresholdKind::BelowRange;
  double lo = 0.0;
  double hi = 0.0;
  std::string text() const;
};

/// Largest swept epsilon from which the reference stays matched to its own
/// class with supports nested downward (within one coarse cell).
std::vector<ThresholdEstimate> threshold_estimate(const SweepReport& report);

// --- convex hull distance ---------------------------------------------------

/// Distance from value to the segment between two vertex values.
double hull_distance(double value, double v1, double v2);

/// Max over the test dictionary of the distance from int phi dmu to the
/// segment [phi(s1), phi(s2)].
double hull_distance(const MeasureVector& mu, const Point& s1, const Point& s2);

// --- basin growth -----------------------------------------------------------

struct BasinGrowthTable {
  std::vector<double> epsilons;
  std::vector<double> probes;
  std::vector<std::vector<double>> alpha;     // [eps][probe]
  std::vector<double> basin_fraction;         // volume share of the basin with alpha >= 0.99
  std::vector<bool> merged;                   // reference not in its own class
  std::vector<bool> probe_nondecreasing;      // alpha non-decreasing as eps decreases
  std::vector<bool> probe_reaches_one;        // alpha >= 0.99 at the smallest eps
};

/// Absorption probability into the class holding `ref`'s carrier at each
/// probe cell, per epsilon (descending).
BasinGrowthTable basin_growth_check(const PerturbedSystem& sys, const AttractorRef& ref,
                                    std::span<const double> epsilons, std::span<const double> probes,
                                    const PartitionPolicy& policy, const UlamOptions& ulam = {});

// --- reference export -------------------------------------------------------

/// model_refs.json content: model, parameters, space, references with
/// carriers, weights and basins, plus model-specific extras.
std::string model_refs_json(const ModelSpec& model);

/// Writes text to path through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace rdslab
