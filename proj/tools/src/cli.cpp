#include "rdslab/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "rdslab/sojourn.hpp"
#include "rdslab/stability.hpp"

namespace rdslab::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

/// Option values as typed by the user, before validation.
using RawOptions = std::map<std::string, std::string>;

const std::vector<std::string>& option_keys() {
  static const std::vector<std::string> keys = {"model", "params", "eps",     "cells-per-eps", "min-cells",
                                                "max-cells", "n",   "samples", "x-samples",     "samples-per-cell",
                                                "seed",  "out",    "probes",  "x",             "y"};
  return keys;
}

struct ModelDefaults {
  std::vector<double> eps;
  std::size_t n;
  std::size_t samples;
  std::size_t x_samples;
  std::size_t sweep_n;
  std::size_t min_cells = 8;
  std::size_t max_cells = 1u << 16;
  std::vector<double> probes;
};

const ModelDefaults& defaults_for(const std::string& model) {
  static const std::map<std::string, ModelDefaults> table = {
      {"north_south", {{0.08, 0.04, 0.02, 0.01, 0.005}, 100000, 20, 200, 100000, 8, 1u << 16, {0.0, 0.1, 0.2, 0.25, 0.5}}},
      {"asym_two_sink", {{0.02, 0.01, 0.005}, 20000, 5, 200, 20000, 8, 1u << 16, {0.0, 0.2, 0.5, 0.6}}},
      {"example1", {{0.08, 0.04, 0.02, 0.01, 0.005}, 2000, 2, 400, 0, 8, 1u << 16, {0.25, 0.5, 0.65, 0.9}}},
      {"bowen", {{0.04, 0.02, 0.01}, 5000, 1, 64, 5000, 128, 256, {}}},
      {"rotation", {{0.08, 0.04, 0.02}, 20000, 5, 50, 20000, 8, 1u << 16, {0.1, 0.6}}},
  };
  static const ModelDefaults fallback{{0.02}, 10000, 1, 100, 10000, 8, 1u << 16, {}};
  auto it = table.find(model);
  return it == table.end() ? fallback : it->second;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  try {
    std::size_t pos = 0;
    v = std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_count(const std::string& s, std::uint64_t& v) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return false;
  try {
    v = std::stoull(s);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

/// key = value lines; '#' starts a comment.
void read_config_file(const std::string& path, RawOptions& raw, std::vector<std::string>& errors) {
  std::ifstream is(path);
  if (!is) {
    errors.push_back(fmt::format("cannot read config file {}", path));
    return;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(fmt::format("{}:{}: expected key = value", path, lineno));
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (std::find(option_keys().begin(), option_keys().end(), key) == option_keys().end()) {
      errors.push_back(fmt::format("{}:{}: unknown key '{}'", path, lineno, key));
      continue;
    }
    raw[key] = trim(line.substr(eq + 1));
  }
}

std::string model_list() {
  std::string s;
  for (const auto& m : model_names()) s += (s.empty() ? "" : ", ") + m;
  return s;
}

/// Precedence: flags > config file > RDSLAB_SEED (seed only) > model defaults.
RunConfig resolve(const std::string& command, const RawOptions& flags, const std::string& config_path,
                  std::vector<std::string>& errors) {
  RawOptions raw;
  if (!config_path.empty()) read_config_file(config_path, raw, errors);
  for (const auto& [k, v] : flags) raw[k] = v;

  RunConfig c;
  c.command = command;
  c.model = raw.count("model") ? raw["model"] : "";
  const auto names = model_names();
  if (c.model.empty()) {
    errors.push_back(fmt::format("--model is required; available models: {}", model_list()));
  } else if (std::find(names.begin(), names.end(), c.model) == names.end()) {
    errors.push_back(fmt::format("unknown model '{}'; available models: {}", c.model, model_list()));
  }
  const ModelDefaults& d = defaults_for(c.model);
  c.eps = d.eps;
  c.n = command == "sweep" ? d.sweep_n : d.n;
  c.samples = d.samples;
  c.x_samples = d.x_samples;
  c.min_cells = d.min_cells;
  c.max_cells = d.max_cells;
  c.probes = d.probes;
  c.out = "rdslab_out";
  if (const char* env = std::getenv("RDSLAB_SEED"); env != nullptr && !raw.count("seed")) {
    if (!parse_count(env, c.seed)) errors.push_back(fmt::format("RDSLAB_SEED '{}' is not an unsigned integer", env));
  }

  if (raw.count("params")) {
    for (const std::string& kv : split(raw["params"], ',')) {
      const auto eq = kv.find('=');
      double v = 0.0;
      if (eq == std::string::npos || !parse_double(trim(kv.substr(eq + 1)), v)) {
        errors.push_back(fmt::format("--params entry '{}' is not key=number", kv));
      } else {
        c.params[trim(kv.substr(0, eq))] = v;
      }
    }
  }
  auto real_list = [&](const std::string& key, std::vector<double>& dst) {
    if (!raw.count(key)) return;
    dst.clear();
    for (const std::string& item : split(raw[key], ',')) {
      double v = 0.0;
      if (!parse_double(item, v)) {
        errors.push_back(fmt::format("--{} entry '{}' is not a number", key, item));
      } else {
        dst.push_back(v);
      }
    }
    if (dst.empty()) errors.push_back(fmt::format("--{} is empty", key));
  };
  real_list("eps", c.eps);
  real_list("probes", c.probes);
  auto count = [&](const std::string& key, std::size_t& dst, std::uint64_t min) {
    if (!raw.count(key)) return;
    std::uint64_t v = 0;
    if (!parse_count(raw[key], v) || v < min) {
      errors.push_back(fmt::format("--{} must be an integer >= {}, got '{}'", key, min, raw[key]));
    } else {
      dst = static_cast<std::size_t>(v);
    }
  };
  count("n", c.n, command == "sweep" ? 0 : 1);
  count("samples", c.samples, 1);
  count("x-samples", c.x_samples, 1);
  count("samples-per-cell", c.samples_per_cell, 1);
  count("min-cells", c.min_cells, 1);
  count("max-cells", c.max_cells, 1);
  if (raw.count("seed") && !parse_count(raw["seed"], c.seed)) {
    errors.push_back(fmt::format("--seed must be an unsigned integer, got '{}'", raw["seed"]));
  }
  if (raw.count("cells-per-eps")) {
    if (!parse_double(raw["cells-per-eps"], c.cells_per_eps) || !(c.cells_per_eps > 0.0)) {
      errors.push_back(fmt::format("--cells-per-eps must be a positive number, got '{}'", raw["cells-per-eps"]));
    }
  }
  for (const char* key : {"x", "y"}) {
    if (!raw.count(key)) continue;
    double v = 0.0;
    if (!parse_double(raw[key], v)) {
      errors.push_back(fmt::format("--{} must be a number, got '{}'", key, raw[key]));
    } else {
      (std::string(key) == "x" ? c.x : c.y) = v;
    }
  }
  if (raw.count("out")) c.out = raw["out"];
  if (c.out.empty()) errors.push_back("--out must not be empty");
  if (c.min_cells > c.max_cells) errors.push_back("--min-cells exceeds --max-cells");

  for (double e : c.eps) {
    if (e == 0.0) {
      errors.push_back("degenerate noise: epsilon must be positive");
    } else if (!(e > 0.0 && e < NoiseLevel::kMaxEpsilon)) {
      errors.push_back(fmt::format("invalid noise level {}: must lie in (0, {})", e, NoiseLevel::kMaxEpsilon));
    }
  }
  std::sort(c.eps.begin(), c.eps.end(), std::greater<>());
  c.eps.erase(std::unique(c.eps.begin(), c.eps.end()), c.eps.end());
  if ((command == "sweep" && c.eps.size() < 1) || (command == "basins" && c.eps.size() < 2)) {
    errors.push_back(fmt::format("{} needs at least {} noise levels", command, command == "basins" ? 2 : 1));
  }
  return c;
}

PartitionPolicy policy_of(const RunConfig& c) { return {c.cells_per_eps, c.min_cells, c.max_cells}; }

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path.string(), text); }

int cmd_simulate(const RunConfig& c, const ModelSpec& m, std::ostream& out) {
  const PerturbedSystem sys = m.system();
  const fs::path root(c.out);
  json summary;
  summary["config"] = json::parse(c.to_json());
  json recs = json::array();
  for (double eps : c.eps) {
    const Partition part = policy_of(c).make(m.space, eps);
    const NoiseLevel level(eps);
    const fs::path dir = root / fmt::format("eps_{:g}", eps);
    fs::create_directories(dir);
    json r;
    r["epsilon"] = eps;
    r["nx"] = part.nx();
    r["ny"] = part.ny();
    const SojournCounts global = sojourn_global_counts(sys, level, c.n, c.x_samples, c.samples, part, c.seed);
    const MeasureVector mu = global.measure();
    write_measure_csv((dir / "sojourn_global.csv").string(), mu);
    r["global"] = {{"file", (dir.filename() / "sojourn_global.csv").string()},
                   {"orbits", global.orbits},
                   {"clamp_events", global.clamp_events},
                   {"support_cells", support_of(mu).cells.size()}};
    if (c.x) {
      const Point x0 = wrap(m.space, *c.x, c.y.value_or(0.0));
      const SojournCounts pt = sojourn_point_counts(sys, x0, level, c.n, part, c.seed, 0, c.samples);
      const MeasureVector mp = pt.measure();
      write_measure_csv((dir / "sojourn_point.csv").string(), mp);
      const SupportSet sp = support_of(mp);
      r["point"] = {{"x", x0.x},
                    {"y", x0.y},
                    {"file", (dir.filename() / "sojourn_point.csv").string()},
                    {"clamp_events", pt.clamp_events},
                    {"support_cells", sp.cells.size()},
                    {"support_diameter", support_diameter(sp)}};
    }
    recs.push_back(r);
    out << fmt::format("simulate eps={:g} cells={} -> {}\n", eps, part.size(), dir.string());
  }
  summary["records"] = recs;
  write_text(root / "simulate.json", summary.dump(2) + "\n");
  return kOk;
}

SweepOptions sweep_options(const RunConfig& c, bool with_mc) {
  SweepOptions o;
  o.policy = policy_of(c);
  o.mc = {with_mc ? c.n : 0, c.samples, c.x_samples};
  o.ulam.samples_per_cell = c.samples_per_cell;
  o.ulam.seed = c.seed;
  o.seed = c.seed;
  o.out_dir = c.out;
  o.config_json = c.to_json();
  o.model_name = c.model;
  return o;
}

int cmd_sweep(const RunConfig& c, const ModelSpec& m, std::ostream& out, bool with_mc) {
  const SweepOptions o = sweep_options(c, with_mc);
  const SweepReport rep = run_sweep(m.system(), m.refs, c.eps, o);
  for (const EpsilonRecord& r : rep.records) {
    std::string beta;
    for (double b : r.beta) beta += fmt::format(" {:.6f}", b);
    std::size_t matched = 0;
    for (int k : r.class_of_ref) matched += k >= 0 ? 1 : 0;
    out << fmt::format("eps={:g} cells={} l={} matched={} beta=[{} ]", r.epsilon, r.part.size(), r.l, matched, beta);
    if (std::isfinite(r.mc_distance)) out << fmt::format(" mc_{}={:.3g} (tol {:.3g})", r.mc_metric, r.mc_distance, r.mc_tolerance);
    for (std::size_t i = 0; i < r.hull_distance.size(); ++i) {
      if (std::isfinite(r.hull_distance[i])) out << fmt::format(" hull={:.4g}", r.hull_distance[i]);
    }
    out << (r.checks_pass() ? " ok" : " CHECK FAILED") << '\n';
  }
  if (rep.records.size() >= 3) {
    for (const ThresholdEstimate& t : threshold_estimate(rep)) out << "threshold " << t.ref_id << ": " << t.text() << '\n';
  }
  return rep.checks_pass() ? kOk : kChecksFailed;
}

int cmd_basins(const RunConfig& c, const ModelSpec& m, std::ostream& out) {
  const PerturbedSystem sys = m.system();
  UlamOptions u;
  u.samples_per_cell = c.samples_per_cell;
  u.seed = c.seed;
  json doc;
  doc["config"] = json::parse(c.to_json());
  json tables = json::array();
  bool pass = true;
  for (const AttractorRef& ref : m.refs) {
    const BasinGrowthTable t = basin_growth_check(sys, ref, c.eps, c.probes, policy_of(c), u);
    json tj;
    tj["ref"] = ref.id;
    tj["epsilons"] = t.epsilons;
    tj["probes"] = t.probes;
    tj["alpha"] = t.alpha;
    json frac = json::array();
    for (double f : t.basin_fraction) frac.push_back(std::isfinite(f) ? json(f) : json(nullptr));
    tj["basin_fraction"] = frac;
    tj["merged"] = t.merged;
    json probes = json::array();
    for (std::size_t p = 0; p < t.probes.size(); ++p) {
      bool interior = false;
      for (const Arc& a : ref.basin) {
        interior = interior || (a.contains(t.probes[p]) && t.probes[p] != a.lo && t.probes[p] != a.hi);
      }
      const bool ok = !interior || (t.probe_nondecreasing[p] && t.probe_reaches_one[p]);
      pass = pass && ok;
      probes.push_back({{"x", t.probes[p]},
                        {"in_basin", interior},
                        {"nondecreasing", static_cast<bool>(t.probe_nondecreasing[p])},
                        {"reaches_one", static_cast<bool>(t.probe_reaches_one[p])},
                        {"pass", ok}});
      out << fmt::format("{} x={:g}:", ref.id, t.probes[p]);
      for (std::size_t k = 0; k < t.epsilons.size(); ++k) out << fmt::format(" {:.4f}", t.alpha[k][p]);
      out << (interior ? (ok ? " ok" : " CHECK FAILED") : " (outside basin)") << '\n';
    }
    tj["probe_checks"] = probes;
    tables.push_back(tj);
  }
  doc["tables"] = tables;
  doc["checks_pass"] = pass;
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "basins.json", doc.dump(2) + "\n");
  return pass ? kOk : kChecksFailed;
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["command"] = command;
  j["model"] = model;
  j["params"] = params;
  j["eps"] = eps;
  j["cells_per_eps"] = cells_per_eps;
  j["min_cells"] = min_cells;
  j["max_cells"] = max_cells;
  j["n"] = n;
  j["samples"] = samples;
  j["x_samples"] = x_samples;
  j["samples_per_cell"] = samples_per_cell;
  j["seed"] = seed;
  j["out"] = out;
  j["probes"] = probes;
  j["x"] = x ? json(*x) : json(nullptr);
  j["y"] = y ? json(*y) : json(nullptr);
  return j.dump();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"rdslab: Ulam and Monte Carlo analysis of randomly perturbed maps"};
  app.name("rdslab");
  app.require_subcommand(1);
  RawOptions flags;
  std::string config_path;
  std::vector<std::string> values(option_keys().size());

  const std::map<std::string, std::string> help = {
      {"model", "model name"},
      {"params", "model parameters k=v[,k=v]"},
      {"eps", "noise levels, comma separated"},
      {"cells-per-eps", "cells per noise radius (cell width = eps / value)"},
      {"min-cells", "lower clamp of cells per axis"},
      {"max-cells", "upper clamp of cells per axis"},
      {"n", "orbit length (sweep: 0 disables the Monte Carlo leg)"},
      {"samples", "noise realizations per initial point"},
      {"x-samples", "initial points for global estimates"},
      {"samples-per-cell", "samples per cell of the sampled 2D kernel"},
      {"seed", "master seed (default from RDSLAB_SEED, else 0)"},
      {"out", "output directory"},
      {"probes", "probe points for basins"},
      {"x", "start point x for simulate"},
      {"y", "start point y for simulate (cylinder)"},
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "Monte Carlo sojourn measures"},
      {"ulam", "Ulam chain: classes, stationary measures, absorption, weights"},
      {"sweep", "descending noise sweep with reference matching and Monte Carlo cross-check"},
      {"basins", "absorption probabilities at probe points across noise levels"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, desc] : commands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    for (std::size_t k = 0; k < option_keys().size(); ++k) {
      sub->add_option("--" + option_keys()[k], values[k], help.at(option_keys()[k]));
    }
    sub->add_option("--config", config_path, "key = value file; flags override it");
    subs[name] = sub;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  for (std::size_t k = 0; k < option_keys().size(); ++k) {
    if (subs[command]->count("--" + option_keys()[k]) > 0) flags[option_keys()[k]] = values[k];
  }

  std::vector<std::string> errors;
  RunConfig cfg = resolve(command, flags, config_path, errors);
  std::optional<ModelSpec> model;
  if (errors.empty() || std::none_of(errors.begin(), errors.end(), [](const std::string& e) {
        return e.find("model") != std::string::npos;
      })) {
    try {
      if (!cfg.model.empty()) {
        model = load_model(cfg.model, cfg.params);
        cfg.params = model->params;
      }
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    err << fmt::format("error: invalid configuration ({} problem{}):\n", errors.size(), errors.size() == 1 ? "" : "s");
    for (const std::string& e : errors) err << "  - " << e << '\n';
    return kConfigError;
  }
  for (double e : cfg.eps) {
    if (e > model->eps_max) {
      err << fmt::format("warning: eps {:g} exceeds the documented range {:g} of model {}\n", e, model->eps_max,
                         cfg.model);
    }
  }

  try {
    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "config.json", json::parse(cfg.to_json()).dump(2) + "\n");
    if (command != "simulate") write_text(fs::path(cfg.out) / "model_refs.json", model_refs_json(*model));
    if (command == "simulate") return cmd_simulate(cfg, *model, out);
    if (command == "ulam") return cmd_sweep(cfg, *model, out, false);
    if (command == "sweep") return cmd_sweep(cfg, *model, out, true);
    return cmd_basins(cfg, *model, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace rdslab::cli
