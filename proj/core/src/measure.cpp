#include "rdslab/measure.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace rdslab {

MeasureVector::MeasureVector(Partition part, std::vector<double> mass) : part_(part), mass_(std::move(mass)) {
  if (mass_.size() != part_.size()) throw Error("measure length does not match partition");
  double total = 0.0;
  for (double m : mass_) {
    if (!std::isfinite(m) || m < 0.0) throw Error("measure entries must be finite and nonnegative");
    total += m;
  }
  if (!(total > 0.0)) throw Error("measure has zero total mass");
  for (double& m : mass_) m /= total;
}

MeasureVector MeasureVector::dirac(const Partition& part, std::size_t cell) {
  std::vector<double> m(part.size(), 0.0);
  m.at(cell) = 1.0;
  return {part, std::move(m)};
}

MeasureVector MeasureVector::uniform(const Partition& part) { return {part, std::vector<double>(part.size(), 1.0)}; }

double MeasureVector::integrate(const std::function<double(const Point&)>& phi) const {
  double s = 0.0;
  for (std::size_t i = 0; i < mass_.size(); ++i) {
    if (mass_[i] != 0.0) s += mass_[i] * phi(part_.cell_center(i));
  }
  return s;
}

bool SupportSet::contains(std::size_t cell) const { return std::binary_search(cells.begin(), cells.end(), cell); }

SupportSet support_of(const MeasureVector& mu, double threshold) {
  const auto& m = mu.mass();
  const double peak = *std::max_element(m.begin(), m.end());
  SupportSet s{mu.partition(), {}, threshold};
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] > threshold * peak) s.cells.push_back(i);
  }
  return s;
}

SupportSet make_support(const Partition& part, std::vector<std::size_t> cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  for (std::size_t c : cells) {
    if (c >= part.size()) throw Error("cell index out of range");
  }
  return {part, std::move(cells), 0.0};
}

namespace {

void require_same_partition(const Partition& a, const Partition& b) {
  if (!(a == b)) throw Error("partition mismatch");
}

std::vector<double> cdf_difference(const MeasureVector& mu, const MeasureVector& nu) {
  std::vector<double> d(mu.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    acc += mu[i] - nu[i];
    d[i] = acc;
  }
  return d;
}

}  // namespace

double w1_distance(const MeasureVector& mu, const MeasureVector& nu) {
  const Partition& part = mu.partition();
  require_same_partition(part, nu.partition());
  switch (part.space().kind()) {
    case SpaceKind::Circle: {
      std::vector<double> d = cdf_difference(mu, nu);
      std::vector<double> sorted = d;
      auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
      std::nth_element(sorted.begin(), mid, sorted.end());
      const double c = *mid;
      double s = 0.0;
      for (double v : d) s += std::fabs(v - c);
      return s / static_cast<double>(part.nx());
    }
    case SpaceKind::Interval: {
      std::vector<double> d = cdf_difference(mu, nu);
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < d.size(); ++i) s += std::fabs(d[i]);
      return s / static_cast<double>(part.nx());
    }
    case SpaceKind::Cylinder:
      return bl_distance(mu, nu);
  }
  return 0.0;
}

namespace {

using Phi = std::function<double(const Point&)>;

std::vector<TestFunction> build_cylinder_dictionary() {
  constexpr double pi = std::numbers::pi;
  std::vector<TestFunction> out;
  auto u_of = [](const Point& p) { return 0.5 * (p.y + 1.0); };
  for (int k = 1; k <= 4; ++k) {
    const double f = 2.0 * pi * k;
    out.push_back({fmt::format("sin(2pi*{}x)/(2pi*{})", k, k), [f](const Point& p) { return std::sin(f * p.x) / f; }});
    out.push_back({fmt::format("cos(2pi*{}x)/(2pi*{})", k, k), [f](const Point& p) { return std::cos(f * p.x) / f; }});
  }
  for (int k = 1; k <= 4; ++k) {
    const double f = pi * k;
    out.push_back({fmt::format("sin(pi*{}u)/(pi*{})", k, k), [f, u_of](const Point& p) { return std::sin(f * u_of(p)) / f; }});
    out.push_back({fmt::format("cos(pi*{}u)/(pi*{})", k, k), [f, u_of](const Point& p) { return std::cos(f * u_of(p)) / f; }});
  }
  const char* names[] = {"sin", "cos"};
  for (int k = 1; k <= 2; ++k) {
    for (int l = 1; l <= 2; ++l) {
      const double fx = 2.0 * pi * k;
      const double fu = pi * l;
      const double scale = fx + fu;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          Phi phi = [=](const Point& p) {
            const double tx = a == 0 ? std::sin(fx * p.x) : std::cos(fx * p.x);
            const double tu = b == 0 ? std::sin(fu * u_of(p)) : std::cos(fu * u_of(p));
            return tx * tu / scale;
          };
          out.push_back({fmt::format("{}(2pi*{}x)*{}(pi*{}u)/(2pi*{}+pi*{})", names[a], k, names[b], l, k, l),
                         std::move(phi)});
        }
      }
    }
  }
  return out;
}

std::vector<TestFunction> build_circle_dictionary() {
  constexpr double pi = std::numbers::pi;
  std::vector<TestFunction> out;
  for (int k = 1; k <= 16; ++k) {
    const double f = 2.0 * pi * k;
    out.push_back({fmt::format("sin(2pi*{}x)/(2pi*{})", k, k), [f](const Point& p) { return std::sin(f * p.x) / f; }});
    out.push_back({fmt::format("cos(2pi*{}x)/(2pi*{})", k, k), [f](const Point& p) { return std::cos(f * p.x) / f; }});
  }
  return out;
}

std::vector<TestFunction> build_interval_dictionary(double lo, double hi) {
  constexpr double pi = std::numbers::pi;
  std::vector<TestFunction> out;
  for (int k = 1; k <= 16; ++k) {
    const double f = pi * k;
    auto s_of = [lo, hi](const Point& p) { return (p.x - lo) / (hi - lo); };
    out.push_back({fmt::format("cos(pi*{}s)/(pi*{})", k, k), [f, s_of](const Point& p) { return std::cos(f * s_of(p)) / f; }});
    out.push_back({fmt::format("sin(pi*{}s)/(pi*{})", k, k), [f, s_of](const Point& p) { return std::sin(f * s_of(p)) / f; }});
  }
  return out;
}

}  // namespace

const std::vector<TestFunction>& test_dictionary(const StateSpace& space) {
  static const std::vector<TestFunction> cylinder = build_cylinder_dictionary();
  static const std::vector<TestFunction> circle = build_circle_dictionary();
  switch (space.kind()) {
    case SpaceKind::Circle:
      return circle;
    case SpaceKind::Cylinder:
      return cylinder;
    case SpaceKind::Interval: {
      // Interval dictionaries depend on the bounds; keep one per distinct space.
      thread_local std::vector<std::pair<StateSpace, std::vector<TestFunction>>> cache;
      for (const auto& [sp, dict] : cache) {
        if (sp == space) return dict;
      }
      cache.emplace_back(space, build_interval_dictionary(space.lower(), space.upper()));
      return cache.back().second;
    }
  }
  return circle;
}

double bl_distance(const MeasureVector& mu, const MeasureVector& nu) {
  const Partition& part = mu.partition();
  require_same_partition(part, nu.partition());
  double worst = 0.0;
  for (const TestFunction& tf : test_dictionary(part.space())) {
    double diff = 0.0;
    for (std::size_t i = 0; i < part.size(); ++i) {
      const double dm = mu[i] - nu[i];
      if (dm != 0.0) diff += dm * tf.phi(part.cell_center(i));
    }
    worst = std::max(worst, std::fabs(diff));
  }
  return worst;
}

namespace {

constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max() / 4;

/// Steps (in cells) from every position of a line of n cells to the nearest
/// marked position; `periodic` wraps around.
std::vector<std::size_t> line_distance(const std::vector<bool>& marked, bool periodic) {
  const std::size_t n = marked.size();
  std::vector<std::size_t> d(n, kFar);
  for (std::size_t i = 0; i < n; ++i) {
    if (marked[i]) d[i] = 0;
  }
  const std::size_t sweeps = periodic ? 2 : 1;
  for (std::size_t s = 0; s < sweeps; ++s) {
    for (std::size_t k = 1; k < n + (periodic ? 1 : 0); ++k) {
      const std::size_t i = k % n;
      const std::size_t prev = (k - 1) % n;
      d[i] = std::min(d[i], d[prev] + 1);
    }
    for (std::size_t k = n - 1 + (periodic ? 1 : 0); k-- > 0;) {
      const std::size_t i = k % n;
      const std::size_t next = (k + 1) % n;
      d[i] = std::min(d[i], d[next] + 1);
    }
  }
  return d;
}

double directed(const SupportSet& a, const SupportSet& b) {
  const Partition& part = a.part;
  const StateSpace& sp = part.space();
  const bool periodic_x = sp.kind() != SpaceKind::Interval;
  const double wx = 1.0 / static_cast<double>(part.nx());

  if (sp.dim() == 1) {
    std::vector<bool> marked(part.nx(), false);
    for (std::size_t c : b.cells) marked[c] = true;
    const auto d = line_distance(marked, periodic_x);
    double worst = 0.0;
    for (std::size_t c : a.cells) worst = std::max(worst, static_cast<double>(d[c]) * wx);
    return worst;
  }

  // Cylinder: per-row circular distance in x, then min over rows of the sup
  // of the x and (metric) y offsets.
  const std::size_t nx = part.nx();
  const std::size_t ny = part.ny();
  const double wy = 0.5 * part.raw_width_y();
  std::vector<std::vector<std::size_t>> rows(ny);
  std::vector<std::vector<bool>> marked(ny, std::vector<bool>(nx, false));
  std::vector<bool> row_used(ny, false);
  for (std::size_t c : b.cells) {
    marked[part.iy(c)][part.ix(c)] = true;
    row_used[part.iy(c)] = true;
  }
  for (std::size_t l = 0; l < ny; ++l) {
    if (row_used[l]) rows[l] = line_distance(marked[l], true);
  }
  double worst = 0.0;
  for (std::size_t c : a.cells) {
    const std::size_t i = part.ix(c);
    const std::size_t j = part.iy(c);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < ny; ++l) {
      if (!row_used[l]) continue;
      const double dy = static_cast<double>(j > l ? j - l : l - j) * wy;
      if (dy >= best) continue;
      best = std::min(best, std::max(dy, static_cast<double>(rows[l][i]) * wx));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

double directed_hausdorff(const SupportSet& a, const SupportSet& b) {
  require_same_partition(a.part, b.part);
  if (a.empty() || b.empty()) throw Error("empty support");
  return directed(a, b);
}

double hausdorff(const SupportSet& a, const SupportSet& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

double support_diameter(const SupportSet& s) {
  if (s.empty()) throw Error("empty support");
  const Partition& part = s.part;
  std::vector<std::size_t> cols;
  std::size_t ymin = part.ny();
  std::size_t ymax = 0;
  for (std::size_t c : s.cells) {
    cols.push_back(part.ix(c));
    ymin = std::min(ymin, part.iy(c));
    ymax = std::max(ymax, part.iy(c));
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  double dx = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    for (std::size_t j = i + 1; j < cols.size(); ++j) {
      const Point p = part.cell_center(cols[i]);
      const Point q = part.cell_center(cols[j]);
      dx = std::max(dx, dist(part.space(), Point{p.x, 0.0}, Point{q.x, 0.0}));
    }
  }
  if (part.space().dim() == 1) return dx;
  const double dy = 0.5 * static_cast<double>(ymax - ymin) * part.raw_width_y();
  return std::max(dx, dy);
}

void write_measure_csv(std::ostream& os, const MeasureVector& mu) {
  const Partition& part = mu.partition();
  os << "cell_index,center_coords,mass\n";
  for (std::size_t i = 0; i < part.size(); ++i) {
    const Point c = part.cell_center(i);
    if (part.space().dim() == 1) {
      os << fmt::format("{},{:.17g},{:.17g}\n", i, c.x, mu[i]);
    } else {
      os << fmt::format("{},{:.17g} {:.17g},{:.17g}\n", i, c.x, c.y, mu[i]);
    }
  }
}

void write_measure_csv(const std::string& path, const MeasureVector& mu) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  write_measure_csv(os, mu);
}

MeasureVector read_measure_csv(std::istream& is, const Partition& part) {
  std::string line;
  if (!std::getline(is, line) || line != "cell_index,center_coords,mass") throw Error("bad measure CSV header");
  std::vector<double> mass(part.size(), 0.0);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    if (c1 == std::string::npos || c1 == c2) throw Error("bad measure CSV row: " + line);
    const std::size_t idx = std::stoull(line.substr(0, c1));
    if (idx >= part.size()) throw Error("measure CSV cell index out of range");
    mass[idx] = std::stod(line.substr(c2 + 1));
    ++rows;
  }
  if (rows != part.size()) throw Error("measure CSV row count does not match partition");
  return {part, std::move(mass)};
}

}  // namespace rdslab
