#include "rdslab/stability.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "rdslab/sojourn.hpp"

namespace rdslab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string to_string(ClassStatus s) {
  switch (s) {
    case ClassStatus::Matched:
      return "matched";
    case ClassStatus::Merged:
      return "merged";
    case ClassStatus::Spurious:
      return "spurious";
  }
  return "unknown";
}

std::size_t Assignment::matched_count() const {
  return static_cast<std::size_t>(std::count_if(class_of_ref.begin(), class_of_ref.end(), [](int c) { return c >= 0; }));
}

Assignment match_classes(const RecurrentDecomposition& dec, std::span<const AttractorRef> refs, const Partition& part) {
  if (dec.class_of.size() != part.size()) throw Error("partition mismatch");
  Assignment out;
  out.classes.resize(dec.classes.size());
  out.class_of_ref.assign(refs.size(), -1);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const SupportSet carrier = refs[r].carrier_cells(part);
    long owner = -2;  // -2 unset, -1 some cell transient
    bool split = false;
    for (std::size_t c : carrier.cells) {
      const long k = dec.class_of[c];
      if (owner == -2) {
        owner = k;
      } else if (owner != k) {
        if (owner >= 0 && k >= 0) split = true;
        owner = -1;
      }
    }
    if (split) throw Error(fmt::format("carrier split: reference {} spans several recurrent classes", refs[r].id));
    if (owner >= 0) out.classes[static_cast<std::size_t>(owner)].refs.push_back(r);
  }
  for (std::size_t k = 0; k < out.classes.size(); ++k) {
    ClassMatch& m = out.classes[k];
    if (m.refs.size() == 1) {
      m.status = ClassStatus::Matched;
      out.class_of_ref[m.refs.front()] = static_cast<int>(k);
    } else {
      m.status = m.refs.empty() ? ClassStatus::Spurious : ClassStatus::Merged;
    }
  }
  return out;
}

Partition PartitionPolicy::make(const StateSpace& space, double epsilon) const {
  if (!(epsilon > 0.0)) throw Error("degenerate noise");
  if (!(cells_per_eps > 0.0) || min_cells == 0 || min_cells > max_cells) throw Error("invalid partition policy");
  const double raw = std::ceil(cells_per_eps / epsilon - 1e-9);
  const auto n = static_cast<std::size_t>(std::clamp(raw, static_cast<double>(min_cells), static_cast<double>(max_cells)));
  return space.dim() == 1 ? Partition(space, n) : Partition(space, n, n);
}

bool EpsilonRecord::checks_pass() const {
  return row_sum_error <= 1e-12 && absorption_sum_error <= 1e-9 && harmonic_error <= 1e-8 && classes_disjoint &&
         indicator_ok && mc_pass();
}

bool SweepReport::checks_pass() const {
  return std::all_of(records.begin(), records.end(), [](const EpsilonRecord& r) { return r.checks_pass(); });
}

double hull_distance(double value, double v1, double v2) {
  const double lo = std::min(v1, v2);
  const double hi = std::max(v1, v2);
  if (value < lo) return lo - value;
  if (value > hi) return value - hi;
  return 0.0;
}

double hull_distance(const MeasureVector& mu, const Point& s1, const Point& s2) {
  double worst = 0.0;
  for (const TestFunction& tf : test_dictionary(mu.partition().space())) {
    worst = std::max(worst, hull_distance(mu.integrate(tf.phi), tf.phi(s1), tf.phi(s2)));
  }
  return worst;
}

void write_file_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(fmt::format("cannot write {}", tmp));
    os << text;
    if (!os) throw Error(fmt::format("cannot write {}", tmp));
  }
  fs::rename(tmp, path);
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string eps_label(double eps) { return fmt::format("eps_{:g}", eps); }

void check_epsilons(std::span<const double> epsilons) {
  if (epsilons.empty()) throw Error("empty epsilon list");
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    if (epsilons[k] == 0.0) throw Error("degenerate noise");
    NoiseLevel{epsilons[k]};
    if (k > 0 && !(epsilons[k] < epsilons[k - 1])) throw Error("epsilons must be strictly decreasing");
  }
}

struct ModelDiagnostics {
  double row_sum_error = 0.0;
  double absorption_sum_error = 0.0;
  double harmonic_error = 0.0;
  double class_leakage = 0.0;
  bool classes_disjoint = true;
  bool indicator_ok = true;
};

ModelDiagnostics diagnose(const MarkovModel& model, const RecurrentDecomposition& dec, const AbsorptionTable& tab) {
  ModelDiagnostics d;
  const std::size_t n = model.size();
  const std::size_t l = dec.classes.size();
  std::vector<int> seen(n, 0);
  for (const auto& cls : dec.classes) {
    for (std::size_t c : cls) ++seen[c];
  }
  d.classes_disjoint = std::all_of(seen.begin(), seen.end(), [](int s) { return s <= 1; });
  std::vector<double> pa(l);
  for (std::size_t i = 0; i < n; ++i) {
    double rs = 0.0;
    std::fill(pa.begin(), pa.end(), 0.0);
    double leak = 0.0;
    for (const MarkovEntry& e : model.row(i)) {
      rs += e.prob;
      for (std::size_t k = 0; k < l; ++k) pa[k] += e.prob * tab(e.col, k);
      if (dec.class_of[i] >= 0 && dec.class_of[e.col] != dec.class_of[i]) leak += e.prob;
    }
    d.row_sum_error = std::max(d.row_sum_error, std::fabs(rs - 1.0));
    d.class_leakage = std::max(d.class_leakage, leak);
    double s = 0.0;
    for (std::size_t k = 0; k < l; ++k) {
      s += tab(i, k);
      d.harmonic_error = std::max(d.harmonic_error, std::fabs(tab(i, k) - pa[k]));
      if (dec.class_of[i] >= 0) {
        const double want = static_cast<long>(k) == dec.class_of[i] ? 1.0 : 0.0;
        if (tab(i, k) != want) d.indicator_ok = false;
      }
    }
    d.absorption_sum_error = std::max(d.absorption_sum_error, std::fabs(s - 1.0));
  }
  return d;
}

void write_absorption_csv(const std::string& path, const AbsorptionTable& tab) {
  std::ofstream os(path);
  os << "cell_index";
  for (std::size_t k = 0; k < tab.classes; ++k) os << ",alpha_" << k;
  os << '\n';
  for (std::size_t i = 0; i < tab.cells; ++i) {
    os << i;
    for (std::size_t k = 0; k < tab.classes; ++k) os << fmt::format(",{:.17g}", tab(i, k));
    os << '\n';
  }
}

void write_classes_csv(const std::string& path, const RecurrentDecomposition& dec) {
  std::ofstream os(path);
  os << "cell_index,class\n";
  for (std::size_t i = 0; i < dec.class_of.size(); ++i) os << i << ',' << dec.class_of[i] << '\n';
}

json record_json(const EpsilonRecord& r, std::span<const AttractorRef> refs) {
  json j;
  j["epsilon"] = r.epsilon;
  j["dir"] = r.dir;
  j["nx"] = r.part.nx();
  j["ny"] = r.part.ny();
  j["cells"] = r.part.size();
  j["cell_width"] = r.part.metric_width();
  j["nnz"] = r.nnz;
  j["l"] = r.l;
  std::size_t matched = 0;
  json classes = json::array();
  for (std::size_t k = 0; k < r.classes.size(); ++k) {
    const ClassRecord& c = r.classes[k];
    json cj;
    cj["index"] = k;
    cj["first_cell"] = c.cells.front();
    cj["size"] = c.cells.size();
    cj["status"] = to_string(c.match.status);
    json ids = json::array();
    for (std::size_t ri : c.match.refs) ids.push_back(refs[ri].id);
    cj["refs"] = ids;
    cj["ref"] = c.match.status == ClassStatus::Matched ? json(refs[c.match.refs.front()].id) : json(nullptr);
    cj["beta"] = c.beta;
    cj["w1_ref"] = number_or_null(c.w1_ref);
    cj["hausdorff_ref"] = number_or_null(c.hausdorff_ref);
    cj["support_cells"] = c.support.cells.size();
    cj["measure_file"] = c.measure_file;
    matched += c.match.status == ClassStatus::Matched ? 1 : 0;
    classes.push_back(cj);
  }
  j["matched"] = matched;
  j["classes"] = classes;
  j["beta"] = r.beta;
  double bsum = 0.0;
  for (double b : r.beta) bsum += b;
  j["beta_sum"] = bsum;
  j["mu_file"] = r.dir.empty() ? json(nullptr) : json(r.dir + "/mu.csv");
  j["markov_file"] = r.dir.empty() ? json(nullptr) : json(r.dir + "/markov.csv");
  j["markov_meta"] = r.dir.empty() ? json(nullptr) : json(r.dir + "/markov.meta");
  j["absorption_file"] = r.dir.empty() ? json(nullptr) : json(r.dir + "/absorption.csv");
  if (std::isfinite(r.mc_distance)) {
    j["mc"] = {{"metric", r.mc_metric},
               {"distance", r.mc_distance},
               {"tolerance", r.mc_tolerance},
               {"pass", r.mc_pass()},
               {"clamp_events", r.mc_clamp_events},
               {"file", r.dir.empty() ? json(nullptr) : json(r.dir + "/mc.csv")}};
  } else {
    j["mc"] = nullptr;
  }
  json hull = json::object();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i < r.hull_distance.size() && std::isfinite(r.hull_distance[i])) hull[refs[i].id] = r.hull_distance[i];
  }
  j["hull_distance"] = hull;
  j["clamp_events"] = {{"ulam", r.ulam_clamp_events}, {"mc", r.mc_clamp_events}};
  j["diagnostics"] = {{"row_sum_error", r.row_sum_error},
                      {"absorption_sum_error", r.absorption_sum_error},
                      {"harmonic_error", r.harmonic_error},
                      {"class_leakage", r.class_leakage},
                      {"classes_disjoint", r.classes_disjoint},
                      {"indicator_ok", r.indicator_ok},
                      {"min_class_cells", r.min_class_cells},
                      {"pass", r.checks_pass()}};
  return j;
}

}  // namespace

std::string report_json(const SweepReport& report, const SweepOptions& opts) {
  json j;
  j["schema_version"] = 1;
  j["complete"] = report.complete;
  j["model"] = report.model_name;
  j["config"] = json::parse(opts.config_json.empty() ? "{}" : opts.config_json);
  j["seed"] = opts.seed;
  j["epsilons"] = report.epsilons;
  j["partition_policy"] = {{"cells_per_eps", opts.policy.cells_per_eps},
                           {"min_cells", opts.policy.min_cells},
                           {"max_cells", opts.policy.max_cells}};
  j["mc_budget"] = {{"n", opts.mc.n}, {"samples", opts.mc.samples}, {"x_samples", opts.mc.x_samples}};
  json refs = json::array();
  for (const AttractorRef& r : report.refs) refs.push_back(r.id);
  j["refs"] = refs;
  json recs = json::array();
  for (const EpsilonRecord& r : report.records) recs.push_back(record_json(r, report.refs));
  j["records"] = recs;
  json th = json::array();
  if (report.complete && report.records.size() >= 3) {
    for (const ThresholdEstimate& t : threshold_estimate(report)) {
      json tj;
      tj["ref"] = t.ref_id;
      tj["kind"] = t.kind == ThresholdKind::Interval ? "interval"
                   : t.kind == ThresholdKind::Censored ? "censored"
                                                       : "below_range";
      tj["lo"] = t.kind == ThresholdKind::BelowRange ? json(nullptr) : json(t.lo);
      tj["hi"] = t.kind == ThresholdKind::Interval ? json(t.hi) : json(nullptr);
      tj["text"] = t.text();
      th.push_back(tj);
    }
  }
  j["thresholds"] = th;
  j["checks_pass"] = report.checks_pass();
  return j.dump(2) + "\n";
}

SweepReport run_sweep(const PerturbedSystem& sys, std::span<const AttractorRef> refs,
                      std::span<const double> epsilons, const SweepOptions& opts) {
  check_epsilons(epsilons);
  SweepReport report;
  report.model_name = opts.model_name.empty() ? sys.map().name() : opts.model_name;
  report.refs.assign(refs.begin(), refs.end());
  report.epsilons.assign(epsilons.begin(), epsilons.end());

  const bool to_disk = !opts.out_dir.empty();
  const fs::path root(opts.out_dir);
  if (to_disk) {
    fs::create_directories(root);
    write_file_atomic((root / "report.json").string(), report_json(report, opts));
  }

  for (double eps : epsilons) {
    try {
      EpsilonRecord rec;
      rec.epsilon = eps;
      rec.part = opts.policy.make(sys.space(), eps);
      const Partition& part = rec.part;
      const NoiseLevel level(eps);

      const MarkovModel model = build_ulam(sys, level, part, opts.ulam);
      rec.nnz = model.nnz();
      rec.ulam_clamp_events = model.clamp_events();
      const RecurrentDecomposition dec = recurrent_classes(model);
      const Assignment asg = match_classes(dec, refs, part);
      rec.l = dec.count();
      rec.class_of_ref = asg.class_of_ref;

      std::vector<MeasureVector> measures;
      measures.reserve(rec.l);
      for (const auto& cls : dec.classes) measures.push_back(stationary_measure(model, cls));
      rec.absorption = absorption(model, dec);
      rec.beta = weights(rec.absorption, part);
      rec.assembled = assemble_mean_sojourn(measures, rec.beta);

      const ModelDiagnostics diag = diagnose(model, dec, rec.absorption);
      rec.row_sum_error = diag.row_sum_error;
      rec.absorption_sum_error = diag.absorption_sum_error;
      rec.harmonic_error = diag.harmonic_error;
      rec.class_leakage = diag.class_leakage;
      rec.classes_disjoint = diag.classes_disjoint;
      rec.indicator_ok = diag.indicator_ok;
      rec.min_class_cells = part.size();

      for (std::size_t k = 0; k < rec.l; ++k) {
        ClassRecord c;
        c.cells = dec.classes[k];
        c.match = asg.classes[k];
        c.beta = rec.beta[k];
        c.measure = measures[k];
        c.support = support_of(measures[k]);
        if (c.match.status == ClassStatus::Matched) {
          const AttractorRef& ref = refs[c.match.refs.front()];
          c.w1_ref = w1_distance(measures[k], ref.reference_measure(part));
          c.hausdorff_ref = hausdorff(c.support, ref.carrier_cells(part));
        }
        rec.min_class_cells = std::min(rec.min_class_cells, c.cells.size());
        rec.classes.push_back(std::move(c));
      }

      rec.hull_distance.assign(refs.size(), std::numeric_limits<double>::quiet_NaN());
      for (std::size_t r = 0; r < refs.size(); ++r) {
        if (refs[r].carrier.size() == 2) {
          rec.hull_distance[r] = hull_distance(rec.assembled, refs[r].carrier[0], refs[r].carrier[1]);
        }
      }

      std::optional<MeasureVector> mc;
      if (opts.mc.n > 0) {
        const SojournCounts counts =
            sojourn_global_counts(sys, level, opts.mc.n, opts.mc.x_samples, opts.mc.samples, part, opts.seed);
        mc = counts.measure();
        rec.mc_clamp_events = counts.clamp_events;
        if (sys.space().dim() == 1) {
          rec.mc_metric = "w1";
          rec.mc_distance = w1_distance(rec.assembled, *mc);
          rec.mc_tolerance = 2.0 * part.metric_width();
        } else {
          rec.mc_metric = "dictionary";
          rec.mc_distance = bl_distance(rec.assembled, *mc);
          rec.mc_tolerance = 0.02;
        }
      }

      if (to_disk) {
        rec.dir = eps_label(eps);
        const fs::path dir = root / rec.dir;
        fs::create_directories(dir);
        {
          std::ofstream os(dir / "markov.csv");
          write_markov_csv(os, model);
        }
        {
          std::ofstream os(dir / "markov.meta");
          write_markov_meta(os, model, {{"model", report.model_name}, {"run_seed", std::to_string(opts.seed)}});
        }
        for (std::size_t k = 0; k < rec.l; ++k) {
          rec.classes[k].measure_file = rec.dir + fmt::format("/class_{}.csv", k);
          write_measure_csv((root / rec.classes[k].measure_file).string(), rec.classes[k].measure);
        }
        write_measure_csv((dir / "mu.csv").string(), rec.assembled);
        if (mc) write_measure_csv((dir / "mc.csv").string(), *mc);
        write_absorption_csv((dir / "absorption.csv").string(), rec.absorption);
        write_classes_csv((dir / "classes.csv").string(), dec);
      }
      report.records.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error(fmt::format("{} (epsilon {:g})", e.what(), eps));
    }
    if (to_disk) write_file_atomic((root / "report.json").string(), report_json(report, opts));
  }
  report.complete = true;
  if (to_disk) write_file_atomic((root / "report.json").string(), report_json(report, opts));
  return report;
}

// ---------------------------------------------------------------------------

std::string ThresholdEstimate::text() const {
  switch (kind) {
    case ThresholdKind::Interval:
      return fmt::format("({:g}, {:g}]", lo, hi);
    case ThresholdKind::Censored:
      return fmt::format(">= {:g} (top of sweep)", lo);
    case ThresholdKind::BelowRange:
      return "below sweep range";
  }
  return {};
}

namespace {

/// Whether `fine` lies inside `coarse` up to one coarse cell.
bool nested_within(const SupportSet& fine, const SupportSet& coarse) {
  if (fine.empty() || coarse.empty()) return false;
  std::vector<std::size_t> mapped;
  mapped.reserve(fine.cells.size());
  for (std::size_t c : fine.cells) mapped.push_back(coarse.part.cell_of(fine.part.cell_center(c)));
  const SupportSet m = make_support(coarse.part, std::move(mapped));
  return directed_hausdorff(m, coarse) <= coarse.part.metric_width() * (1.0 + 1e-9);
}

}  // namespace

std::vector<ThresholdEstimate> threshold_estimate(const SweepReport& report) {
  if (report.records.size() < 3) throw Error("threshold estimate needs at least 3 swept noise levels");
  const std::size_t m = report.records.size();
  std::vector<ThresholdEstimate> out;
  for (std::size_t r = 0; r < report.refs.size(); ++r) {
    auto good = [&](std::size_t k) { return report.records[k].class_of_ref[r] >= 0; };
    auto support = [&](std::size_t k) -> const SupportSet& {
      return report.records[k].classes[static_cast<std::size_t>(report.records[k].class_of_ref[r])].support;
    };
    ThresholdEstimate t;
    t.ref_id = report.refs[r].id;
    if (!good(m - 1)) {
      t.kind = ThresholdKind::BelowRange;
      out.push_back(t);
      continue;
    }
    std::size_t k0 = m - 1;
    while (k0 > 0 && good(k0 - 1) && nested_within(support(k0), support(k0 - 1))) --k0;
    if (k0 == 0) {
      t.kind = ThresholdKind::Censored;
      t.lo = report.records[0].epsilon;
    } else {
      t.kind = ThresholdKind::Interval;
      t.lo = report.records[k0].epsilon;
      t.hi = report.records[k0 - 1].epsilon;
    }
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

BasinGrowthTable basin_growth_check(const PerturbedSystem& sys, const AttractorRef& ref,
                                    std::span<const double> epsilons, std::span<const double> probes,
                                    const PartitionPolicy& policy, const UlamOptions& ulam) {
  check_epsilons(epsilons);
  if (ref.carrier.empty()) throw Error("attractor reference needs weighted carrier");
  BasinGrowthTable t;
  t.epsilons.assign(epsilons.begin(), epsilons.end());
  t.probes.assign(probes.begin(), probes.end());
  const std::span<const AttractorRef> one(&ref, 1);
  for (double eps : epsilons) {
    const Partition part = policy.make(sys.space(), eps);
    const MarkovModel model = build_ulam(sys, NoiseLevel(eps), part, ulam);
    const RecurrentDecomposition dec = recurrent_classes(model);
    const Assignment asg = match_classes(dec, one, part);
    const long cls = dec.class_of[part.cell_of(ref.carrier.front())];
    t.merged.push_back(asg.class_of_ref[0] < 0);
    const AbsorptionTable tab = absorption(model, dec);
    std::vector<double> row;
    for (double x : probes) {
      row.push_back(cls >= 0 ? tab(part.cell_of({x, 0.0}), static_cast<std::size_t>(cls)) : 0.0);
    }
    t.alpha.push_back(row);
    if (ref.basin.empty() || cls < 0 || part.space().dim() != 1) {
      t.basin_fraction.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      double covered = 0.0;
      for (std::size_t c = 0; c < part.size(); ++c) {
        if (ref.in_basin(part.cell_center(c).x) && tab(c, static_cast<std::size_t>(cls)) >= 0.99) {
          covered += part.cell_volume(c);
        }
      }
      t.basin_fraction.push_back(covered / ref.basin_volume());
    }
  }
  for (std::size_t p = 0; p < probes.size(); ++p) {
    bool nondecreasing = true;
    for (std::size_t k = 1; k < t.alpha.size(); ++k) {
      if (t.alpha[k][p] < t.alpha[k - 1][p] - 1e-9) nondecreasing = false;
    }
    t.probe_nondecreasing.push_back(nondecreasing);
    t.probe_reaches_one.push_back(!t.alpha.empty() && t.alpha.back()[p] >= 0.99);
  }
  return t;
}

// ---------------------------------------------------------------------------

std::string model_refs_json(const ModelSpec& model) {
  json j;
  j["schema_version"] = 1;
  j["model"] = model.name;
  j["params"] = model.params;
  j["space"] = {{"kind", model.space.name()}, {"lower", model.space.lower()}, {"upper", model.space.upper()}};
  j["eps_max"] = model.eps_max;
  json refs = json::array();
  for (const AttractorRef& r : model.refs) {
    json rj;
    rj["id"] = r.id;
    rj["description"] = r.description;
    json carrier = json::array();
    for (const Point& p : r.carrier) carrier.push_back({p.x, p.y});
    rj["carrier"] = carrier;
    rj["weights"] = r.weights;
    json basin = json::array();
    for (const Arc& a : r.basin) basin.push_back({a.lo, a.hi});
    rj["basin"] = basin;
    rj["basin_volume"] = r.basin.empty() ? json(nullptr) : json(r.basin_volume());
    refs.push_back(rj);
  }
  j["refs"] = refs;
  json extras = json::object();
  if (model.name == "bowen") {
    auto crit = [](const CriticalPoint& c) {
      return json{{"x", c.p.x}, {"y", c.p.y}, {"hxx", c.hxx}, {"hyy", c.hyy}, {"hxy", c.hxy}};
    };
    const auto [s1, s2] = bowen_saddles();
    const auto [s3, s4] = bowen_sources();
    extras["saddles"] = {crit(s1), crit(s2)};
    extras["sources"] = {crit(s3), crit(s4)};
    extras["separatrix_level"] = bowen_separatrix_level();
  } else if (model.name == "example1") {
    extras["sink_cap"] = example1_sink_cap();
    extras["degenerate_point"] = {example1_x_of_s(0.0), 0.0};
    json sinks = json::array();
    for (const Example1Sink& s : example1_sinks(model.refs.size())) {
      sinks.push_back({{"s", s.s}, {"x", s.x}, {"source_lo_s", s.source_lo_s}, {"source_hi_s", s.source_hi_s}});
    }
    extras["sinks"] = sinks;
  } else if (model.space.dim() == 1 && model.map && model.map->has_lift()) {
    const auto* map = model.map.get();
    json fps = json::array();
    for (const FixedPoint& f : circle_fixed_points([map](double x) { return map->lift(x); })) {
      fps.push_back({{"x", f.x}, {"derivative", f.derivative}, {"sink", f.sink}});
    }
    extras["fixed_points"] = fps;
  }
  j["extras"] = extras;
  return j.dump(2) + "\n";
}

}  // namespace rdslab
