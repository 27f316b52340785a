#include "rdslab/ulam.hpp"

#include <fmt/format.h>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <numeric>
#include <ostream>
#include <sstream>

#include "rdslab/parallel.hpp"

namespace rdslab {

std::string to_string(BuildMode mode) {
  switch (mode) {
    case BuildMode::Exact1D:
      return "exact-1d";
    case BuildMode::Sampled2D:
      return "sampled-2d";
    case BuildMode::Explicit:
      return "explicit";
  }
  return "unknown";
}

namespace {

BuildMode mode_from_string(const std::string& s) {
  if (s == "exact-1d") return BuildMode::Exact1D;
  if (s == "sampled-2d") return BuildMode::Sampled2D;
  if (s == "explicit") return BuildMode::Explicit;
  throw Error("unknown build mode " + s);
}

}  // namespace

MarkovModel::MarkovModel(Partition part, std::vector<std::vector<MarkovEntry>> rows, BuildMode mode, double epsilon,
                         double prune_tol, std::uint64_t seed, std::size_t samples_per_cell)
    : part_(part),
      mode_(mode),
      epsilon_(epsilon),
      prune_tol_(prune_tol),
      seed_(seed),
      samples_per_cell_(samples_per_cell) {
  if (rows.size() != part_.size()) throw Error("row count does not match partition");
  row_ptr_.reserve(rows.size() + 1);
  row_ptr_.push_back(0);
  pruned_.assign(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    std::sort(r.begin(), r.end(), [](const MarkovEntry& a, const MarkovEntry& b) { return a.col < b.col; });
    // merge duplicate columns
    std::vector<MarkovEntry> merged;
    for (const auto& e : r) {
      if (e.col >= part_.size()) throw Error("column index out of range");
      if (!std::isfinite(e.prob) || e.prob < 0.0) throw Error("transition probabilities must be nonnegative");
      if (!merged.empty() && merged.back().col == e.col) {
        merged.back().prob += e.prob;
      } else {
        merged.push_back(e);
      }
    }
    double kept = 0.0;
    const std::size_t start = entries_.size();
    for (const auto& e : merged) {
      if (e.prob < prune_tol_) {
        pruned_[i] += e.prob;
      } else {
        entries_.push_back(e);
        kept += e.prob;
      }
    }
    if (!(kept > 0.0)) throw Error(fmt::format("row {} has no mass after pruning", i));
    for (std::size_t k = start; k < entries_.size(); ++k) entries_[k].prob /= kept;
    row_ptr_.push_back(entries_.size());
  }
}

MarkovModel MarkovModel::from_dense(const std::vector<std::vector<double>>& dense, double prune_tol) {
  const std::size_t n = dense.size();
  std::vector<std::vector<MarkovEntry>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dense[i].size() != n) throw Error("dense transition matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
      if (dense[i][j] != 0.0) rows[i].push_back({j, dense[i][j]});
    }
  }
  return {Partition(StateSpace::circle(), n), std::move(rows), BuildMode::Explicit, 0.0, prune_tol};
}

double MarkovModel::at(std::size_t i, std::size_t j) const {
  for (const auto& e : row(i)) {
    if (e.col == j) return e.prob;
  }
  return 0.0;
}

void MarkovModel::left_multiply(std::span<const double> x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (const auto& e : row(i)) out[e.col] += xi * e.prob;
  }
}

// ---------------------------------------------------------------------------
// Exact one-dimensional construction
// ---------------------------------------------------------------------------

namespace {

struct Piece {
  double a;
  double b;
  double fa;
  double fb;
};

template <class F>
double integrate_lift(const F& lift, double a, double b) {
  if (b <= a) return 0.0;
  return boost::math::quadrature::gauss<double, 8>::integrate(lift, a, b);
}

/// Where the monotone lift on [a,b] crosses `level`, clamped to [a,b].
template <class F>
double crossing(const F& lift, const Piece& p, double level) {
  const bool increasing = p.fb >= p.fa;
  const double lo = increasing ? p.fa : p.fb;
  const double hi = increasing ? p.fb : p.fa;
  if (level <= lo) return increasing ? p.a : p.b;
  if (level >= hi) return increasing ? p.b : p.a;
  auto g = [&](double x) { return lift(x) - level; };
  std::uintmax_t iters = 200;
  const boost::math::tools::eps_tolerance<double> tol(50);
  const auto [l, r] =
      boost::math::tools::toms748_solve(g, p.a, p.b, p.fa - level, p.fb - level, tol, iters);
  return 0.5 * (l + r);
}

/// (1/len) int_piece Phi(z - F(x)) dx, Phi(d) = clamp((d + eps)/(2 eps), 0, 1):
/// the probability that a uniform point of the piece lands below z.
template <class F>
double mass_below(const F& lift, const Piece& p, double z, double eps) {
  const double len = p.b - p.a;
  const double x_full = crossing(lift, p, z - eps);  // F = z - eps
  const double x_none = crossing(lift, p, z + eps);  // F = z + eps
  double full = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  if (p.fb >= p.fa) {
    full = x_full - p.a;
    lo = x_full;
    hi = x_none;
  } else {
    full = p.b - x_full;
    lo = x_none;
    hi = x_full;
  }
  double ramp = 0.0;
  if (hi > lo) ramp = ((z + eps) * (hi - lo) - integrate_lift(lift, lo, hi)) / (2.0 * eps);
  return std::clamp((full + ramp) / len, 0.0, 1.0);
}

template <class F>
void monotone_pieces(const F& lift, double a, double b, double fa, double fb, int depth, std::vector<Piece>& out) {
  constexpr int kProbes = 4;
  std::array<double, kProbes + 1> vals{};
  vals[0] = fa;
  vals[kProbes] = fb;
  for (int k = 1; k < kProbes; ++k) vals[k] = lift(a + (b - a) * k / kProbes);
  bool up = true;
  bool down = true;
  for (int k = 0; k < kProbes; ++k) {
    up = up && vals[k + 1] >= vals[k];
    down = down && vals[k + 1] <= vals[k];
  }
  if (up || down || depth >= 8) {
    out.push_back({a, b, fa, fb});
    return;
  }
  const double m = 0.5 * (a + b);
  const double fm = vals[kProbes / 2];
  monotone_pieces(lift, a, m, fa, fm, depth + 1, out);
  monotone_pieces(lift, m, b, fm, fb, depth + 1, out);
}

std::vector<MarkovEntry> exact_row(const DeterministicMap& map, const Partition& part, std::size_t cell, double eps) {
  const StateSpace& sp = part.space();
  const bool periodic = sp.kind() == SpaceKind::Circle;
  const double w = part.raw_width_x();
  const double origin = sp.kind() == SpaceKind::Interval ? sp.lower() : 0.0;
  const double x0 = part.cell_origin(cell).x;
  const double x1 = cell + 1 == part.nx() ? (periodic ? 1.0 : sp.upper()) : x0 + w;
  auto lift = [&map](double x) { return map.lift(x); };

  std::vector<Piece> pieces;
  monotone_pieces(lift, x0, x1, lift(x0), lift(x1), 0, pieces);

  std::map<std::size_t, double> acc;
  const auto n = static_cast<long>(part.nx());
  for (const Piece& p : pieces) {
    const double len = p.b - p.a;
    if (len <= 0.0) continue;
    const double share = len / (x1 - x0);
    const double fmin = std::min(p.fa, p.fb);
    const double fmax = std::max(p.fa, p.fb);
    long k = static_cast<long>(std::floor((fmin - eps - origin) / w));
    const long k_end = static_cast<long>(std::ceil((fmax + eps - origin) / w));
    double below = mass_below(lift, p, origin + static_cast<double>(k) * w, eps);
    for (; k < k_end; ++k) {
      const double next = mass_below(lift, p, origin + static_cast<double>(k + 1) * w, eps);
      const double m = next - below;
      below = next;
      if (m <= 0.0) continue;
      long target = k;
      if (periodic) {
        target = ((k % n) + n) % n;
      } else {
        target = std::clamp<long>(k, 0, n - 1);
      }
      acc[static_cast<std::size_t>(target)] += share * m;
    }
  }
  std::vector<MarkovEntry> row;
  row.reserve(acc.size());
  for (const auto& [c, m] : acc) row.push_back({c, m});
  return row;
}

std::vector<MarkovEntry> sampled_row(const PerturbedSystem& sys, const NoiseLevel& level, const Partition& part,
                                     std::size_t cell, const UlamOptions& opts, std::uint64_t& clamps) {
  const StateSpace& sp = part.space();
  const int dim = sp.dim();
  std::size_t grid = 1;
  if (dim == 1) {
    grid = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(opts.samples_per_cell))));
  } else {
    grid = static_cast<std::size_t>(std::floor(std::sqrt(std::sqrt(static_cast<double>(opts.samples_per_cell)))));
  }
  grid = std::max<std::size_t>(grid, 1);
  const std::size_t points = dim == 1 ? grid : grid * grid;
  const std::size_t per_point = std::max<std::size_t>(1, opts.samples_per_cell / points);

  Rng rng(opts.seed, cell, static_cast<std::uint64_t>(StreamDomain::UlamSampling));
  const Point o = part.cell_origin(cell);
  const double wx = part.raw_width_x();
  const double wy = part.raw_width_y();
  std::map<std::size_t, std::size_t> hits;
  for (std::size_t q = 0; q < points; ++q) {
    const double sx = (static_cast<double>(q % grid) + rng.uniform()) / static_cast<double>(grid);
    const double sy = dim == 2 ? (static_cast<double>(q / grid) + rng.uniform()) / static_cast<double>(grid) : 0.0;
    const Point x = wrap(sp, o.x + sx * wx, o.y + sy * wy);
    const Point fx = sys.deterministic(x);
    for (std::size_t s = 0; s < per_point; ++s) {
      const NoiseVector t = sample_noise(level, dim, rng);
      bool clamped = false;
      const Point y = wrap(sp, fx.x + t.dx, fx.y + t.dy, &clamped);
      clamps += clamped ? 1 : 0;
      ++hits[part.cell_of(y)];
    }
  }
  const double total = static_cast<double>(points * per_point);
  std::vector<MarkovEntry> row;
  for (const auto& [c, h] : hits) row.push_back({c, static_cast<double>(h) / total});
  return row;
}

}  // namespace

MarkovModel build_ulam(const PerturbedSystem& sys, const NoiseLevel& level, const Partition& part,
                       const UlamOptions& opts) {
  const double eps = level.epsilon();
  if (eps == 0.0) throw Error("degenerate noise");
  if (!(part.space() == sys.space())) throw Error("space mismatch");
  const bool exact = part.space().dim() == 1 && sys.map().has_lift();
  if (opts.enforce_resolution) {
    bool fine = false;
    if (exact) {
      fine = part.raw_width_x() <= eps / 4.0;
    } else {
      fine = part.raw_width_x() <= eps && (part.space().dim() == 1 || part.raw_width_y() <= eps);
    }
    if (!fine) {
      throw Error(fmt::format("partition too coarse for noise level: cell width {} vs epsilon {}",
                              part.raw_width_x(), eps));
    }
  }
  if (!exact && opts.samples_per_cell == 0) throw Error("samples_per_cell must be positive");

  std::vector<std::vector<MarkovEntry>> rows(part.size());
  const std::size_t workers = std::min(worker_count(), part.size());
  std::vector<std::uint64_t> clamps(std::max<std::size_t>(workers, 1), 0);
  parallel_chunks(
      part.size(),
      [&](std::size_t b, std::size_t e, std::size_t w) {
        for (std::size_t i = b; i < e; ++i) {
          rows[i] = exact ? exact_row(sys.map(), part, i, eps) : sampled_row(sys, level, part, i, opts, clamps[w]);
        }
      },
      workers);
  MarkovModel model(part, std::move(rows), exact ? BuildMode::Exact1D : BuildMode::Sampled2D, eps, opts.prune_tol,
                    exact ? 0 : opts.seed, exact ? 0 : opts.samples_per_cell);
  model.set_clamp_events(std::accumulate(clamps.begin(), clamps.end(), std::uint64_t{0}));
  return model;
}

// ---------------------------------------------------------------------------
// Recurrent classes (iterative Tarjan)
// ---------------------------------------------------------------------------

RecurrentDecomposition recurrent_classes(const MarkovModel& model) {
  const std::size_t n = model.size();
  constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, kUnvisited);
  std::vector<std::size_t> low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<long> comp(n, -1);
  std::vector<std::vector<std::size_t>> comps;
  std::size_t counter = 0;

  struct Frame {
    std::size_t v;
    std::size_t edge;
  };
  std::vector<Frame> call;
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      const auto edges = model.row(f.v);
      if (f.edge < edges.size()) {
        const std::size_t w = edges[f.edge++].col;
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const std::size_t v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<std::size_t> c;
        for (;;) {
          const std::size_t w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = static_cast<long>(comps.size());
          c.push_back(w);
          if (w == v) break;
        }
        comps.push_back(std::move(c));
      }
    }
  }

  std::vector<bool> closed(comps.size(), true);
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& e : model.row(v)) {
      if (comp[e.col] != comp[v]) closed[static_cast<std::size_t>(comp[v])] = false;
    }
  }
  RecurrentDecomposition dec;
  dec.class_of.assign(n, -1);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    if (!closed[k]) continue;
    std::sort(comps[k].begin(), comps[k].end());
    dec.classes.push_back(std::move(comps[k]));
  }
  std::sort(dec.classes.begin(), dec.classes.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  for (std::size_t k = 0; k < dec.classes.size(); ++k) {
    for (std::size_t c : dec.classes[k]) dec.class_of[c] = static_cast<long>(k);
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (dec.class_of[v] < 0) dec.transient.push_back(v);
  }
  return dec;
}

// ---------------------------------------------------------------------------
// Stationary measures
// ---------------------------------------------------------------------------

namespace {

void require_recurrent(const MarkovModel& model, std::span<const std::size_t> cls, const std::vector<long>& local) {
  if (cls.empty()) throw Error("class is empty");
  // closed: no transition leaves the class
  for (std::size_t c : cls) {
    for (const auto& e : model.row(c)) {
      if (local[e.col] < 0) throw Error(fmt::format("class is not recurrent: cell {} leaks to cell {}", c, e.col));
    }
  }
  // irreducible: every cell reachable from the first one
  std::vector<bool> seen(cls.size(), false);
  std::vector<std::size_t> todo{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!todo.empty()) {
    const std::size_t v = cls[todo.back()];
    todo.pop_back();
    for (const auto& e : model.row(v)) {
      const auto l = static_cast<std::size_t>(local[e.col]);
      if (!seen[l]) {
        seen[l] = true;
        ++reached;
        todo.push_back(l);
      }
    }
  }
  if (reached != cls.size()) throw Error("class is not recurrent: not strongly connected");
}

}  // namespace

MeasureVector stationary_measure(const MarkovModel& model, std::span<const std::size_t> cls,
                                 const PowerIterationOptions& opts) {
  const std::size_t n = model.size();
  std::vector<long> local(n, -1);
  for (std::size_t k = 0; k < cls.size(); ++k) {
    if (cls[k] >= n) throw Error("class cell out of range");
    local[cls[k]] = static_cast<long>(k);
  }
  require_recurrent(model, cls, local);

  const std::size_t m = cls.size();
  // local CSR copy for cache-friendly iteration
  std::vector<std::size_t> ptr{0};
  std::vector<std::size_t> col;
  std::vector<double> val;
  for (std::size_t c : cls) {
    for (const auto& e : model.row(c)) {
      col.push_back(static_cast<std::size_t>(local[e.col]));
      val.push_back(e.prob);
    }
    ptr.push_back(col.size());
  }

  std::vector<double> pi(m, 1.0 / static_cast<double>(m));
  std::vector<double> next(m);
  double residual = 0.0;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double pii = pi[i];
      for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) next[col[k]] += pii * val[k];
    }
    residual = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      residual = std::max(residual, std::fabs(next[i] - pi[i]));
      next[i] = 0.5 * (next[i] + pi[i]);
      total += next[i];
    }
    if (residual <= opts.tolerance) {
      std::vector<double> mass(n, 0.0);
      for (std::size_t i = 0; i < m; ++i) mass[cls[i]] = pi[i];
      return {model.partition(), std::move(mass)};
    }
    for (std::size_t i = 0; i < m; ++i) pi[i] = next[i] / total;
  }
  throw Error(fmt::format("power iteration did not converge: residual {:.3e} after {} iterations on a class of {} cells",
                          residual, opts.max_iterations, m));
}

// ---------------------------------------------------------------------------
// Absorption probabilities
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kStateReductionLimit = 20000;

/// Subtraction-free state reduction (Grassmann-Taksar-Heyman style):
/// transient states are eliminated one at a time, folding their outgoing
/// weights into their predecessors; escape totals are sums of nonnegative
/// terms, so nearly closed transient sets keep full relative accuracy.
Eigen::MatrixXd absorb_state_reduction(const MarkovModel& model, const RecurrentDecomposition& dec,
                                       const std::vector<long>& local) {
  const std::size_t t = dec.transient.size();
  const std::size_t l = dec.count();
  std::vector<std::map<std::size_t, double>> out(t);  // transient -> transient (no self loops)
  std::vector<std::vector<double>> to_class(t, std::vector<double>(l, 0.0));
  std::vector<std::set<std::size_t>> in(t);
  for (std::size_t k = 0; k < t; ++k) {
    for (const auto& e : model.row(dec.transient[k])) {
      if (local[e.col] >= 0) {
        const auto j = static_cast<std::size_t>(local[e.col]);
        if (j == k) continue;
        out[k][j] += e.prob;
        in[j].insert(k);
      } else if (dec.class_of[e.col] >= 0) {
        to_class[k][static_cast<std::size_t>(dec.class_of[e.col])] += e.prob;
      }
    }
  }
  std::vector<double> total(t, 0.0);
  std::vector<char> gone(t, 0);
  for (std::size_t k = 0; k < t; ++k) {
    double s = 0.0;
    for (double w : to_class[k]) s += w;
    for (const auto& [j, w] : out[k]) s += w;
    if (!(s > 0.0)) throw Error(fmt::format("singular absorption system: transient cell {} cannot escape", dec.transient[k]));
    total[k] = s;
    gone[k] = 1;
    for (std::size_t i : in[k]) {
      if (gone[i]) continue;
      auto it = out[i].find(k);
      const double f = it->second / s;
      out[i].erase(it);
      for (const auto& [j, w] : out[k]) {
        if (j == i) continue;  // becomes a self loop of i, which only rescales i
        out[i][j] += f * w;
        in[j].insert(i);
      }
      for (std::size_t c = 0; c < l; ++c) to_class[i][c] += f * to_class[k][c];
    }
    in[k].clear();
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l));
  for (std::size_t kk = t; kk-- > 0;) {
    for (std::size_t c = 0; c < l; ++c) {
      double a = to_class[kk][c];
      for (const auto& [j, w] : out[kk]) a += w * x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
      x(static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(c)) = a / total[kk];
    }
  }
  return x;
}

Eigen::MatrixXd absorb_sparse_lu(const MarkovModel& model, const RecurrentDecomposition& dec,
                                 const std::vector<long>& local) {
  const std::size_t t = dec.transient.size();
  const std::size_t l = dec.count();
  using SpMat = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l));
  for (std::size_t k = 0; k < t; ++k) {
    const std::size_t v = dec.transient[k];
    trip.emplace_back(k, k, 1.0);
    for (const auto& e : model.row(v)) {
      if (local[e.col] >= 0) {
        trip.emplace_back(k, local[e.col], -e.prob);
      } else if (dec.class_of[e.col] >= 0) {
        rhs(static_cast<Eigen::Index>(k), dec.class_of[e.col]) += e.prob;
      }
    }
  }
  SpMat a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) {
    throw Error(fmt::format("singular absorption system ({} transient cells, {} classes): {}", t, l,
                            lu.lastErrorMessage()));
  }
  Eigen::MatrixXd x = lu.solve(rhs);
  for (int round = 0; round < 20; ++round) {
    const Eigen::MatrixXd r = rhs - a * x;
    if (r.cwiseAbs().maxCoeff() <= 1e-14) break;
    x += lu.solve(r);
  }
  return x;
}

}  // namespace

AbsorptionTable absorption(const MarkovModel& model, const RecurrentDecomposition& dec) {
  const std::size_t n = model.size();
  const std::size_t l = dec.count();
  if (dec.class_of.size() != n) throw Error("decomposition does not belong to this model");
  if (l == 0) throw Error("decomposition has no recurrent class");

  AbsorptionTable tab;
  tab.cells = n;
  tab.classes = l;
  tab.alpha.assign(n * l, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (dec.class_of[v] >= 0) tab.alpha[v * l + static_cast<std::size_t>(dec.class_of[v])] = 1.0;
  }
  const std::size_t t = dec.transient.size();
  if (t == 0) return tab;
  if (l == 1) {
    // absorption into the only closed class is certain
    for (std::size_t v : dec.transient) tab.alpha[v] = 1.0;
    tab.residual = 0.0;
    return tab;
  }

  std::vector<long> local(n, -1);
  for (std::size_t k = 0; k < t; ++k) local[dec.transient[k]] = static_cast<long>(k);

  Eigen::MatrixXd x = t <= kStateReductionLimit ? absorb_state_reduction(model, dec, local)
                                                 : absorb_sparse_lu(model, dec, local);

  // residual of (I - Q) a = R 1_i on the transient cells
  double residual = 0.0;
  for (std::size_t k = 0; k < t; ++k) {
    std::vector<double> r(l, 0.0);
    for (std::size_t i = 0; i < l; ++i) r[i] = x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
    for (const auto& e : model.row(dec.transient[k])) {
      for (std::size_t i = 0; i < l; ++i) {
        const double target = local[e.col] >= 0 ? x(local[e.col], static_cast<Eigen::Index>(i))
                              : dec.class_of[e.col] == static_cast<long>(i) ? 1.0
                                                                            : 0.0;
        r[i] -= e.prob * target;
      }
    }
    for (double v : r) residual = std::max(residual, std::fabs(v));
  }
  if (!(residual <= 1e-10)) {
    throw Error(fmt::format("absorption solve stalled at residual {:.3e} ({} transient cells)", residual, t));
  }
  tab.residual = residual;
  for (std::size_t k = 0; k < t; ++k) {
    const std::size_t v = dec.transient[k];
    for (std::size_t i = 0; i < l; ++i) {
      tab.alpha[v * l + i] = std::max(0.0, x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
    }
  }
  return tab;
}

std::vector<double> weights(const AbsorptionTable& table, const Partition& part) {
  if (table.cells != part.size()) throw Error("absorption table does not match partition");
  std::vector<double> beta(table.classes, 0.0);
  for (std::size_t v = 0; v < table.cells; ++v) {
    const double vol = part.cell_volume(v);
    for (std::size_t i = 0; i < table.classes; ++i) beta[i] += vol * table(v, i);
  }
  return beta;
}

MeasureVector assemble_mean_sojourn(std::span<const MeasureVector> measures, std::span<const double> beta) {
  if (measures.empty() || measures.size() != beta.size()) throw Error("weight mismatch: count");
  double sum = 0.0;
  for (double b : beta) {
    if (!(b >= 0.0)) throw Error("weight mismatch: negative weight");
    sum += b;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw Error(fmt::format("weight mismatch: weights sum to {:.17g}", sum));
  const Partition& part = measures.front().partition();
  std::vector<double> mass(part.size(), 0.0);
  for (std::size_t k = 0; k < measures.size(); ++k) {
    if (!(measures[k].partition() == part)) throw Error("partition mismatch");
    for (std::size_t c = 0; c < part.size(); ++c) mass[c] += beta[k] * measures[k][c];
  }
  return {part, std::move(mass)};
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_markov_csv(std::ostream& os, const MarkovModel& model) {
  os << "row,col,prob\n";
  std::string buf;
  for (std::size_t i = 0; i < model.size(); ++i) {
    for (const auto& e : model.row(i)) {
      buf.clear();
      fmt::format_to(std::back_inserter(buf), "{},{},{:.17g}\n", i, e.col, e.prob);
      os << buf;
    }
  }
}

void write_markov_meta(std::ostream& os, const MarkovModel& model,
                       const std::vector<std::pair<std::string, std::string>>& extra) {
  const Partition& p = model.partition();
  os << "space=" << p.space().name() << '\n';
  os << fmt::format("lower={:.17g}\nupper={:.17g}\n", p.space().lower(), p.space().upper());
  os << "nx=" << p.nx() << '\n' << "ny=" << p.ny() << '\n';
  os << fmt::format("epsilon={:.17g}\n", model.epsilon());
  os << "mode=" << to_string(model.mode()) << '\n';
  os << "seed=" << model.seed() << '\n';
  os << fmt::format("prune_tol={:.17g}\n", model.prune_tol());
  os << "samples_per_cell=" << model.samples_per_cell() << '\n';
  os << "nnz=" << model.nnz() << '\n';
  os << "clamp_events=" << model.clamp_events() << '\n';
  for (const auto& [k, v] : extra) os << k << '=' << v << '\n';
}

MarkovModel read_markov(std::istream& csv, std::istream& meta) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw Error("markov metadata missing key " + k);
    return it->second;
  };
  const std::string space = get("space");
  StateSpace sp = StateSpace::circle();
  if (space == "interval") {
    sp = StateSpace::interval(std::stod(get("lower")), std::stod(get("upper")));
  } else if (space == "cylinder") {
    sp = StateSpace::cylinder();
  } else if (space != "circle") {
    throw Error("unknown space " + space);
  }
  const Partition part(sp, std::stoull(get("nx")), std::stoull(get("ny")));
  std::vector<std::vector<MarkovEntry>> rows(part.size());
  if (!std::getline(csv, line) || line != "row,col,prob") throw Error("bad markov CSV header");
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a;
    std::string b;
    std::string c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw Error("bad markov CSV row: " + line);
    }
    const std::size_t r = std::stoull(a);
    if (r >= rows.size()) throw Error("markov CSV row out of range");
    rows[r].push_back({std::stoull(b), std::stod(c)});
  }
  MarkovModel m(part, std::move(rows), mode_from_string(get("mode")), std::stod(get("epsilon")),
                std::stod(get("prune_tol")), std::stoull(get("seed")), std::stoull(get("samples_per_cell")));
  m.set_clamp_events(std::stoull(get("clamp_events")));
  return m;
}

}  // namespace rdslab
