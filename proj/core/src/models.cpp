#include "rdslab/models.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace rdslab {

namespace {

constexpr double kPi = std::numbers::pi;

double param(const ModelParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void reject_unknown(const ModelParams& p, std::initializer_list<const char*> known, const std::string& model) {
  for (const auto& [k, v] : p) {
    if (std::find_if(known.begin(), known.end(), [&](const char* s) { return k == s; }) == known.end()) {
      throw Error(fmt::format("unknown parameter '{}' for model {}", k, model));
    }
  }
}

double lift_derivative(const std::function<double(double)>& lift, double x) {
  constexpr double h = 1e-6;
  return (lift(x + h) - lift(x - h)) / (2.0 * h);
}

}  // namespace

// ---------------------------------------------------------------------------

double north_south_map(double x, double a) {
  if (!(a > 0.0 && a < 1.0 / (4.0 * kPi))) throw Error("north_south parameter a must lie in (0, 1/(4 pi))");
  return wrap(StateSpace::circle(), x - a * std::sin(4.0 * kPi * x)).x;
}

double asym_two_sink_map(double x, double a, double b) {
  return wrap(StateSpace::circle(), x - a * std::sin(2.0 * kPi * x) - b * std::sin(4.0 * kPi * x)).x;
}

std::vector<FixedPoint> circle_fixed_points(const std::function<double(double)>& lift, std::size_t scan) {
  auto g = [&](double x) { return lift(x) - x; };
  std::vector<FixedPoint> out;
  auto record = [&](double x) {
    const double d = lift_derivative(lift, x);
    out.push_back({x, d, std::fabs(d) < 1.0});
  };
  double x0 = 0.0;
  double g0 = g(x0);
  for (std::size_t i = 1; i <= scan; ++i) {
    const double x1 = static_cast<double>(i) / static_cast<double>(scan);
    const double g1 = g(x1);
    if (g0 == 0.0) {
      record(x0);
    } else if ((g0 < 0.0 && g1 > 0.0) || (g0 > 0.0 && g1 < 0.0)) {
      double lo = x0;
      double hi = x1;
      double glo = g0;
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((gm < 0.0) == (glo < 0.0)) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      record(0.5 * (lo + hi));
    }
    x0 = x1;
    g0 = g1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Example with infinitely many sinks

double example1_x_of_s(double s) { return 0.5 * (kPi * s + 1.0); }
double example1_s_of_x(double x) { return (2.0 * x - 1.0) / kPi; }

double example1_dphi(double s) {
  if (s == 0.0) return 0.0;
  const double u = 1.0 / s;
  return s * s * (4.0 * s * std::sin(u) - std::cos(u));
}

namespace {

constexpr double kChartEnd = 1.0 / kPi;

double e1_velocity(double s) { return -example1_dphi(s); }

double e1_rk4(double s, double h) {
  const double k1 = e1_velocity(s);
  const double k2 = e1_velocity(s + 0.5 * h * k1);
  const double k3 = e1_velocity(s + 0.5 * h * k2);
  const double k4 = e1_velocity(s + h * k3);
  return s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Flow time from s to the chart end b, int ds / v(s) by 8-point Gauss-Legendre.
double e1_time_to(double s, double b) {
  static constexpr std::array<double, 8> nodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                  -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                  0.7966664774136267,  0.9602898564975363};
  static constexpr std::array<double, 8> wts = {0.1012285362903763, 0.2223810344533745, 0.3137066575673244,
                                                0.3626837833783620, 0.3626837833783620, 0.3137066575673244,
                                                0.2223810344533745, 0.1012285362903763};
  const double h = 0.5 * (b - s);
  const double m = 0.5 * (b + s);
  double t = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) t += wts[k] / e1_velocity(m + h * nodes[k]);
  return t * h;
}

}  // namespace

double example1_lift(double x, int substeps) {
  double s = example1_s_of_x(x);
  double offset = 0.0;
  const double h = 1.0 / substeps;
  for (int k = 0; k < substeps; ++k) {
    const double next = e1_rk4(s, h);
    if (next < -kChartEnd) {
      const double tau = std::clamp(e1_time_to(s, -kChartEnd), 0.0, h);
      offset -= 2.0 * kChartEnd;
      s = e1_rk4(kChartEnd, h - tau);
    } else if (next >= kChartEnd) {
      const double tau = std::clamp(e1_time_to(s, kChartEnd), 0.0, h);
      offset += 2.0 * kChartEnd;
      s = e1_rk4(-kChartEnd, h - tau);
    } else {
      s = next;
    }
  }
  return example1_x_of_s(s + offset);
}

std::size_t example1_sink_cap() {
  // branches j with j pi + pi/2 < 1e8; sink k needs branch k + 1
  const auto branches = static_cast<std::size_t>(std::floor((1e8 - 0.5 * kPi) / kPi));
  return branches - 1;
}

namespace {

/// Root of tan(u) = u/4 on (j pi, j pi + pi/2), via the pole-free form
/// sin(u) - (u/4) cos(u).
double example1_branch_root(std::size_t j) {
  auto h = [](double u) { return std::sin(u) - 0.25 * u * std::cos(u); };
  double lo = static_cast<double>(j) * kPi;
  double hi = lo + 0.5 * kPi;
  double hlo = h(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi || hi - lo <= 1e-12) break;
    const double hm = h(mid);
    if ((hm < 0.0) == (hlo < 0.0)) {
      lo = mid;
      hlo = hm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<Example1Sink> example1_sinks(std::size_t k) {
  if (k < 1) throw Error("example1_sinks needs k >= 1");
  if (k > example1_sink_cap()) {
    throw Error(fmt::format("requested {} sinks beyond resolvable cap {}", k, example1_sink_cap()));
  }
  std::vector<double> s(k + 2, 0.0);  // s[j] = 1/u_j, j >= 1
  for (std::size_t j = 1; j <= k + 1; ++j) s[j] = 1.0 / example1_branch_root(j);

  std::vector<Example1Sink> out;
  out.reserve(k);
  for (std::size_t j = 1; j <= k; ++j) {
    const double sign = (j % 2 == 1) ? 1.0 : -1.0;
    Example1Sink sk{};
    sk.s = sign * s[j];
    sk.x = example1_x_of_s(sk.s);
    // flanking sources: same side, branches j-1 and j+1; the outermost sink
    // is flanked across the glued endpoint by -s_1
    const double inner = sign * s[j + 1];
    const double outer = j == 1 ? -s[1] : sign * s[j - 1];
    sk.source_lo_s = std::min(inner, outer);
    sk.source_hi_s = std::max(inner, outer);
    if (j == 1) {
      sk.basin = {example1_x_of_s(inner), example1_x_of_s(outer)};  // wraps through 0
    } else {
      sk.basin = {example1_x_of_s(sk.source_lo_s), example1_x_of_s(sk.source_hi_s)};
    }
    out.push_back(sk);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planar heteroclinic flow

double bowen_energy(const Point& z) {
  const double k = 4.0 * kPi;
  return 0.5 * z.y * z.y + (1.0 + std::cos(k * z.x)) / (k * k);
}

double bowen_separatrix_level() {
  const double k = 4.0 * kPi;
  return 2.0 / (k * k);
}

namespace {

inline Point bowen_field_fast(double x, double y, double c) {
  constexpr double k = 4.0 * kPi;
  const double sn = std::sin(k * x);
  const double cs = std::cos(k * x);
  const double hx = -sn / k;
  const double h = 0.5 * y * y + (1.0 + cs) / (k * k);
  const double push = c * (2.0 / (k * k) - h);
  return {y + push * hx, -hx + push * y};
}

}  // namespace

Point bowen_field(const Point& z, double c) { return bowen_field_fast(z.x, z.y, c); }

Point bowen_map(const Point& z, double c, int substeps) {
  const double h = 1.0 / substeps;
  double x = z.x;
  double y = z.y;
  for (int i = 0; i < substeps; ++i) {
    const Point k1 = bowen_field_fast(x, y, c);
    const Point k2 = bowen_field_fast(x + 0.5 * h * k1.x, y + 0.5 * h * k1.y, c);
    const Point k3 = bowen_field_fast(x + 0.5 * h * k2.x, y + 0.5 * h * k2.y, c);
    const Point k4 = bowen_field_fast(x + h * k3.x, y + h * k3.y, c);
    x += h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    y += h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
  }
  return wrap(StateSpace::cylinder(), x, y);
}

namespace {

CriticalPoint newton_critical(Point guess) {
  const double k = 4.0 * kPi;
  Point p = guess;
  for (int it = 0; it < 60; ++it) {
    const double gx = -std::sin(k * p.x) / k;
    const double gy = p.y;
    if (std::fabs(gx) < 1e-15 && std::fabs(gy) < 1e-15) {
      CriticalPoint cp{};
      cp.p = wrap(StateSpace::cylinder(), p.x, p.y);
      if (cp.p.x > 1.0 - 1e-12) cp.p.x = 0.0;
      cp.hxx = -std::cos(k * cp.p.x);
      cp.hyy = 1.0;
      cp.hxy = 0.0;
      cp.saddle = cp.hxx * cp.hyy - cp.hxy * cp.hxy < 0.0;
      return cp;
    }
    const double jxx = -std::cos(k * p.x);
    if (std::fabs(jxx) < 1e-12) break;
    p.x -= gx / jxx;
    p.y -= gy;
  }
  throw Error(fmt::format("Newton failed to locate a critical point of H from ({}, {})", guess.x, guess.y));
}

}  // namespace

std::pair<CriticalPoint, CriticalPoint> bowen_saddles() {
  CriticalPoint a = newton_critical({0.03, 0.02});
  CriticalPoint b = newton_critical({0.47, -0.02});
  if (!a.saddle || !b.saddle) throw Error("critical point of H expected to be a saddle is not");
  if (a.p.x > b.p.x) std::swap(a, b);
  return {a, b};
}

std::pair<CriticalPoint, CriticalPoint> bowen_sources() {
  CriticalPoint a = newton_critical({0.22, 0.02});
  CriticalPoint b = newton_critical({0.78, -0.02});
  if (a.saddle || b.saddle) throw Error("eye center of H expected to have a definite Hessian");
  if (a.p.x > b.p.x) std::swap(a, b);
  return {a, b};
}

SupportSet bowen_separatrix_cells(const Partition& part) {
  if (part.space().kind() != SpaceKind::Cylinder) throw Error("space mismatch");
  const double level = bowen_separatrix_level();
  std::vector<std::size_t> cells;
  const double wx = part.raw_width_x();
  const double wy = part.raw_width_y();
  for (std::size_t c = 0; c < part.size(); ++c) {
    const Point o = part.cell_origin(c);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int i = 0; i <= 2; ++i) {
      for (int j = 0; j <= 2; ++j) {
        const double v = bowen_energy({o.x + 0.5 * i * wx, o.y + 0.5 * j * wy}) - level;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (lo <= 0.0 && hi >= 0.0) cells.push_back(c);
  }
  return make_support(part, std::move(cells));
}

// ---------------------------------------------------------------------------
// Registry

namespace {

class Example1Map : public DeterministicMap {
 public:
  const StateSpace& space() const override { return space_; }
  Point apply(const Point& p) const override { return {example1_map(p.x), 0.0}; }
  bool has_lift() const override { return true; }
  double lift(double x) const override { return example1_lift(x); }
  std::string name() const override { return "example1"; }

 private:
  StateSpace space_ = StateSpace::circle();
};

class BowenMap : public DeterministicMap {
 public:
  explicit BowenMap(double c) : c_(c) {}
  const StateSpace& space() const override { return space_; }
  Point apply(const Point& p) const override { return bowen_map(p, c_); }
  std::string name() const override { return "bowen"; }

 private:
  StateSpace space_ = StateSpace::cylinder();
  double c_;
};

std::vector<AttractorRef> sinks_from_fixed_points(const std::vector<FixedPoint>& fps) {
  std::vector<AttractorRef> refs;
  const std::size_t n = fps.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!fps[i].sink) continue;
    const FixedPoint& prev = fps[(i + n - 1) % n];
    const FixedPoint& next = fps[(i + 1) % n];
    AttractorRef r;
    r.id = fmt::format("sink_{:.6f}", fps[i].x);
    r.description = fmt::format("attracting fixed point x = {:.17g}", fps[i].x);
    r.carrier = {{fps[i].x, 0.0}};
    r.weights = {1.0};
    r.basin = {{prev.x, next.x}};
    refs.push_back(std::move(r));
  }
  return refs;
}

void check_circle_refs(const ModelSpec& m) {
  auto lift = [&m](double x) { return m.map->lift(x); };
  for (const AttractorRef& r : m.refs) {
    for (const Point& p : r.carrier) {
      const Point fp = m.map->apply(p);
      if (dist(m.space, fp, p) > 1e-10) {
        throw Error(fmt::format("model {}: reference point {} is not fixed", m.name, p.x));
      }
      if (!(std::fabs(lift_derivative(lift, p.x)) < 1.0)) {
        throw Error(fmt::format("model {}: reference point {} is not attracting", m.name, p.x));
      }
    }
  }
}

void check_saddle(const ModelSpec& m, const Point& p) {
  const Point fp = m.map->apply(p);
  if (dist(m.space, fp, p) > 1e-10) throw Error(fmt::format("model {}: saddle ({}, {}) is not fixed", m.name, p.x, p.y));
  constexpr double h = 1e-6;
  auto diff = [&](double dx, double dy) {
    const Point a = m.map->apply(wrap(m.space, p.x + dx, p.y + dy));
    const Point b = m.map->apply(wrap(m.space, p.x - dx, p.y - dy));
    double ddx = a.x - b.x;
    ddx -= std::round(ddx);
    return std::array<double, 2>{ddx / (2 * h), (a.y - b.y) / (2 * h)};
  };
  const auto cx = diff(h, 0.0);
  const auto cy = diff(0.0, h);
  const double tr = cx[0] + cy[1];
  const double det = cx[0] * cy[1] - cx[1] * cy[0];
  const double disc = tr * tr - 4.0 * det;
  if (disc <= 0.0) throw Error(fmt::format("model {}: saddle Jacobian has complex eigenvalues", m.name));
  const double l1 = 0.5 * (tr + std::sqrt(disc));
  const double l2 = 0.5 * (tr - std::sqrt(disc));
  const bool saddle = (std::fabs(l1) > 1.0) != (std::fabs(l2) > 1.0);
  if (!saddle) throw Error(fmt::format("model {}: saddle ({}, {}) has wrong stability type", m.name, p.x, p.y));
}

}  // namespace

std::vector<std::string> model_names() { return {"asym_two_sink", "bowen", "example1", "north_south", "rotation"}; }

ModelSpec load_model(const std::string& name, const ModelParams& params) {
  ModelSpec m;
  m.name = name;
  if (name == "rotation") {
    reject_unknown(params, {"angle"}, name);
    const double angle = param(params, "angle", 0.25);
    m.params = {{"angle", angle}};
    m.space = StateSpace::circle();
    m.map = make_rotation(angle);
    m.eps_max = 0.2;
    return m;
  }
  if (name == "north_south") {
    reject_unknown(params, {"a"}, name);
    const double a = param(params, "a", 0.05);
    north_south_map(0.0, a);  // validates a
    m.params = {{"a", a}};
    m.space = StateSpace::circle();
    m.map = std::make_shared<LiftedMap>(m.space, name,
                                        [a](double x) { return x - a * std::sin(4.0 * kPi * x); });
    for (double sink : {0.0, 0.5}) {
      AttractorRef r;
      r.id = sink == 0.0 ? "sink_0" : "sink_half";
      r.description = fmt::format("attracting fixed point x = {}", sink);
      r.carrier = {{sink, 0.0}};
      r.weights = {1.0};
      r.basin = {sink == 0.0 ? Arc{0.75, 0.25} : Arc{0.25, 0.75}};
      m.refs.push_back(r);
    }
    m.eps_max = 0.125;
    check_circle_refs(m);
    return m;
  }
  if (name == "asym_two_sink") {
    reject_unknown(params, {"a", "b"}, name);
    const double a = param(params, "a", 0.03);
    const double b = param(params, "b", 0.05);
    m.params = {{"a", a}, {"b", b}};
    m.space = StateSpace::circle();
    auto lift = [a, b](double x) { return x - a * std::sin(2.0 * kPi * x) - b * std::sin(4.0 * kPi * x); };
    for (int i = 0; i <= 10000; ++i) {
      if (!(lift_derivative(lift, i / 10000.0) > 0.0)) throw Error("asym_two_sink parameters do not give a diffeomorphism");
    }
    m.map = std::make_shared<LiftedMap>(m.space, name, lift);
    const auto fps = circle_fixed_points(lift);
    bool alternating = fps.size() == 4;
    for (std::size_t i = 0; alternating && i < fps.size(); ++i) {
      alternating = fps[i].sink != fps[(i + 1) % fps.size()].sink;
    }
    if (!alternating) throw Error(fmt::format("unexpected phase portrait: {} fixed points", fps.size()));
    m.refs = sinks_from_fixed_points(fps);
    m.eps_max = 0.125;
    check_circle_refs(m);
    return m;
  }
  if (name == "example1") {
    reject_unknown(params, {"sinks"}, name);
    const double k = param(params, "sinks", 12.0);
    if (!(k >= 1.0) || k != std::floor(k)) throw Error("example1 parameter sinks must be a positive integer");
    m.params = {{"sinks", k}};
    m.space = StateSpace::circle();
    m.map = std::make_shared<Example1Map>();
    for (const Example1Sink& s : example1_sinks(static_cast<std::size_t>(k))) {
      AttractorRef r;
      r.id = fmt::format("sink_s{:+.6f}", s.s);
      r.description = fmt::format("local minimum of phi at s = {:.17g}", s.s);
      r.carrier = {{s.x, 0.0}};
      r.weights = {1.0};
      r.basin = {s.basin};
      m.refs.push_back(std::move(r));
    }
    m.eps_max = 0.1;
    check_circle_refs(m);
    return m;
  }
  if (name == "bowen") {
    reject_unknown(params, {"c"}, name);
    const double c = param(params, "c", 4.0);
    if (!(c > 0.0)) throw Error("bowen parameter c must be positive");
    m.params = {{"c", c}};
    m.space = StateSpace::cylinder();
    m.map = std::make_shared<BowenMap>(c);
    const auto [s1, s2] = bowen_saddles();
    AttractorRef r;
    r.id = "separatrix_cycle";
    r.description = "heteroclinic cycle through the saddles s1, s2; reference point of the hull {delta_s1, delta_s2}";
    r.carrier = {s1.p, s2.p};
    r.weights = {0.5, 0.5};
    m.refs.push_back(r);
    m.eps_max = 0.05;
    check_saddle(m, s1.p);
    check_saddle(m, s2.p);
    return m;
  }
  std::string list;
  for (const auto& n : model_names()) list += (list.empty() ? "" : ", ") + n;
  throw Error(fmt::format("unknown model '{}'; available models: {}", name, list));
}

}  // namespace rdslab
