#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rdslab/dynamics.hpp"
#include "rdslab/measure.hpp"

namespace rdslab {

enum class BuildMode { Exact1D, Sampled2D, Explicit };

std::string to_string(BuildMode mode);

struct UlamOptions {
  double prune_tol = 1e-12;
  std::size_t samples_per_cell = 256;
  std::uint64_t seed = 0;
  /// Reject partitions too coarse for the noise level: exact 1D mode needs
  /// raw cell width <= eps/4 (noise spans >= 8 cells), sampled 2D mode needs
  /// raw width <= eps on each axis (noise spans >= 2 cells).
  bool enforce_resolution = true;
};

struct MarkovEntry {
  std::size_t col;
  double prob;
};

/// Sparse row-stochastic matrix over the cells of a partition: entry (i,j)
/// approximates the probability that a uniformly distributed point of cell i
/// lands in cell j after one perturbed step. Rows are stored CSR with
/// ascending columns.
class MarkovModel {
 public:
  MarkovModel(Partition part, std::vector<std::vector<MarkovEntry>> rows, BuildMode mode, double epsilon,
              double prune_tol, std::uint64_t seed = 0, std::size_t samples_per_cell = 0);

  /// Small explicit chains (tests, toy examples). `dense[i][j]` is P(i -> j);
  /// states are the cells of a circle partition of matching size.
  static MarkovModel from_dense(const std::vector<std::vector<double>>& dense, double prune_tol = 1e-12);

  const Partition& partition() const { return part_; }
  std::size_t size() const { return row_ptr_.size() - 1; }
  std::size_t nnz() const { return entries_.size(); }
  std::span<const MarkovEntry> row(std::size_t i) const {
    return {entries_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  double at(std::size_t i, std::size_t j) const;

  BuildMode mode() const { return mode_; }
  double epsilon() const { return epsilon_; }
  double prune_tol() const { return prune_tol_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t samples_per_cell() const { return samples_per_cell_; }

  /// Mass removed from each row by pruning, before renormalization.
  const std::vector<double>& pruned_mass() const { return pruned_; }
  /// Sampled points whose bounded coordinate had to be clamped.
  std::uint64_t clamp_events() const { return clamp_events_; }
  void set_clamp_events(std::uint64_t n) { clamp_events_ = n; }

  /// x P for a row vector x.
  void left_multiply(std::span<const double> x, std::span<double> out) const;

 private:
  Partition part_;
  std::vector<std::size_t> row_ptr_;
  std::vector<MarkovEntry> entries_;
  std::vector<double> pruned_;
  BuildMode mode_;
  double epsilon_;
  double prune_tol_;
  std::uint64_t seed_;
  std::size_t samples_per_cell_;
  std::uint64_t clamp_events_ = 0;
};

/// Ulam discretization of x -> f(x) + t, t uniform on the epsilon ball.
/// One-dimensional maps with a continuous lift get exact entries
///   P[i][j] = (1/w) int_{cell i} |(F(x) + [-eps,eps]) cap cell j| / (2 eps) dx
/// by piecewise integration over monotone pieces of F; other maps are
/// sampled with stratified (x, noise) draws, seeded per row.
/// Throws "degenerate noise" for eps = 0 and
/// "partition too coarse for noise level" (see UlamOptions).
MarkovModel build_ulam(const PerturbedSystem& sys, const NoiseLevel& level, const Partition& part,
                       const UlamOptions& opts = {});

struct RecurrentDecomposition {
  std::vector<std::vector<std::size_t>> classes;  // each sorted; ordered by first cell
  std::vector<std::size_t> transient;             // sorted
  std::vector<long> class_of;                     // -1 for transient cells

  std::size_t count() const { return classes.size(); }
};

/// Strongly connected components of the support digraph; the closed ones
/// (no edge leaving the component) are the recurrent classes.
RecurrentDecomposition recurrent_classes(const MarkovModel& model);

struct PowerIterationOptions {
  double tolerance = 1e-12;
  std::size_t max_iterations = 1'000'000;
};

/// Stationary probability vector of the chain restricted to a recurrent
/// class, embedded in the full partition (zero off the class). Lazy power
/// iteration pi <- (pi + pi P)/2 from the uniform vector on the class,
/// stopped when |pi P - pi|_inf <= tolerance.
MeasureVector stationary_measure(const MarkovModel& model, std::span<const std::size_t> cls,
                                 const PowerIterationOptions& opts = {});

/// alpha[x][i]: probability that the chain started in cell x is eventually
/// absorbed in class i.
struct AbsorptionTable {
  std::size_t cells = 0;
  std::size_t classes = 0;
  std::vector<double> alpha;  // row-major, cells x classes
  double residual = 0.0;      // final |(I-Q)a - b|_inf on transient cells

  double operator()(std::size_t cell, std::size_t cls) const { return alpha[cell * classes + cls]; }
};

/// Solves (I - Q) a_i = R 1_i on the transient cells (sparse LU plus
/// iterative refinement to residual <= 1e-10); class cells get indicators.
AbsorptionTable absorption(const MarkovModel& model, const RecurrentDecomposition& dec);

/// beta_i = sum over cells of volume * alpha[cell][i].
std::vector<double> weights(const AbsorptionTable& table, const Partition& part);

/// Convex combination sum_i beta_i mu_i. Throws "weight mismatch" when the
/// counts differ or the weights do not sum to one.
MeasureVector assemble_mean_sojourn(std::span<const MeasureVector> measures, std::span<const double> beta);

/// Triplet CSV `row,col,prob` (17 significant digits).
void write_markov_csv(std::ostream& os, const MarkovModel& model);
/// Sidecar key=value metadata: space, bounds, nx, ny, epsilon, mode, seed,
/// prune_tol, samples_per_cell, nnz, clamp_events, plus caller extras.
void write_markov_meta(std::ostream& os, const MarkovModel& model,
                       const std::vector<std::pair<std::string, std::string>>& extra = {});
MarkovModel read_markov(std::istream& csv, std::istream& meta);

}  // namespace rdslab
