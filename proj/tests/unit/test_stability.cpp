#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "rdslab/error.hpp"
#include "rdslab/stability.hpp"

using namespace rdslab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rdslab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

const SweepReport& north_south_report() {
  static const SweepReport report = [] {
    const auto m = load_model("north_south");
    SweepOptions o;
    o.model_name = m.name;
    o.seed = 3;
    o.out_dir = scratch_dir("ns_sweep").string();
    o.mc = {2000, 2, 50};
    const std::vector<double> eps{0.08, 0.04, 0.02, 0.01};
    return run_sweep(m.system(), m.refs, eps, o);
  }();
  return report;
}

}  // namespace

TEST_CASE("hull distance examples") {
  CHECK(hull_distance(2.0, 1.0, 3.0) == 0.0);
  CHECK(hull_distance(3.5, 1.0, 3.0) == 0.5);
  CHECK(hull_distance(1.0, 1.0, 1.0) == 0.0);
  CHECK(hull_distance(0.0, 3.0, 1.0) == 1.0);
  const Partition p(StateSpace::cylinder(), 32, 32);
  const Point a{0.0, 0.0}, b{0.5, 0.0};
  const std::vector<double> mix{0.3, 0.7};
  const auto mu = assemble_mean_sojourn(std::vector<MeasureVector>{MeasureVector::dirac(p, a), MeasureVector::dirac(p, b)}, mix);
  CHECK(hull_distance(mu, p.cell_center(p.cell_of(a)), p.cell_center(p.cell_of(b))) <= 1e-12);
  CHECK(hull_distance(MeasureVector::dirac(p, Point{0.25, 0.6}), a, b) > 0.05);
}

TEST_CASE("matching by carrier containment") {
  const auto m = MarkovModel::from_dense({{0.5, 0.5, 0.0, 0.0}, {0.5, 0.5, 0.0, 0.0}, {0.0, 0.0, 1.0, 0.0},
                                          {0.0, 0.5, 0.0, 0.5}});
  const auto dec = recurrent_classes(m);
  const Partition& p = m.partition();
  auto ref = [&](const std::string& id, std::vector<std::size_t> cells) {
    AttractorRef r;
    r.id = id;
    for (std::size_t c : cells) {
      r.carrier.push_back(p.cell_center(c));
      r.weights.push_back(1.0 / static_cast<double>(cells.size()));
    }
    return r;
  };
  SUBCASE("one carrier per class") {
    const std::vector<AttractorRef> refs{ref("a", {0}), ref("b", {2})};
    const auto asg = match_classes(dec, refs, p);
    CHECK(asg.matched_count() == 2);
    CHECK(asg.classes[0].status == ClassStatus::Matched);
    CHECK(asg.class_of_ref == std::vector<int>{0, 1});
  }
  SUBCASE("two carriers in one class") {
    const std::vector<AttractorRef> refs{ref("a", {0}), ref("b", {1})};
    const auto asg = match_classes(dec, refs, p);
    CHECK(asg.classes[0].status == ClassStatus::Merged);
    CHECK(asg.classes[1].status == ClassStatus::Spurious);
    CHECK(asg.class_of_ref == std::vector<int>{-1, -1});
    CHECK(asg.matched_count() == 0);
    CHECK(to_string(ClassStatus::Merged) == "merged");
  }
  SUBCASE("carrier outside every class") {
    const std::vector<AttractorRef> refs{ref("a", {3})};
    const auto asg = match_classes(dec, refs, p);
    CHECK(asg.class_of_ref == std::vector<int>{-1});
  }
  SUBCASE("carrier split over two classes") {
    const std::vector<AttractorRef> refs{ref("a", {0, 2})};
    CHECK_THROWS_WITH_AS(match_classes(dec, refs, p), doctest::Contains("carrier split"), Error);
  }
}

TEST_CASE("partition policy") {
  const PartitionPolicy pol;
  CHECK(pol.make(StateSpace::circle(), 0.01).nx() == 800);
  CHECK(pol.make(StateSpace::circle(), 0.5).nx() == 16);
  const auto c = pol.make(StateSpace::cylinder(), 0.04);
  CHECK(c.nx() == c.ny());
  PartitionPolicy capped;
  capped.max_cells = 100;
  CHECK(capped.make(StateSpace::circle(), 0.001).nx() == 100);
  CHECK_THROWS_WITH_AS(pol.make(StateSpace::circle(), 0.0), doctest::Contains("degenerate noise"), Error);
}

TEST_CASE("north_south sweep: merge, symmetric weights, concentration") {
  const auto& r = north_south_report();
  REQUIRE(r.records.size() == 4);
  CHECK(r.complete);
  CHECK(r.records[0].l == 1);
  CHECK(r.records[0].classes[0].match.status == ClassStatus::Merged);
  double prev = 1e9;
  for (std::size_t k = 1; k < 4; ++k) {
    const auto& e = r.records[k];
    CHECK(e.l == 2);
    CHECK(std::fabs(e.beta[0] - 0.5) <= 0.02);
    CHECK(std::fabs(e.beta[1] - 0.5) <= 0.02);
    CHECK(e.class_of_ref[0] >= 0);
    CHECK(e.class_of_ref[1] >= 0);
    const double w = e.classes[static_cast<std::size_t>(e.class_of_ref[0])].w1_ref;
    CHECK(w < prev);
    prev = w;
    CHECK(e.classes_disjoint);
    CHECK(e.row_sum_error <= 1e-12);
    CHECK(e.absorption_sum_error <= 1e-9);
    CHECK(e.harmonic_error <= 1e-8);
    CHECK(e.indicator_ok);
    CHECK(std::isfinite(e.mc_distance));
  }
  for (const auto& e : r.records) {
    double s = 0.0;
    for (double b : e.beta) s += b;
    CHECK(std::fabs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("threshold estimates") {
  const auto th = threshold_estimate(north_south_report());
  REQUIRE(th.size() == 2);
  for (const auto& t : th) {
    CHECK(t.kind == ThresholdKind::Interval);
    CHECK(t.lo == 0.04);
    CHECK(t.hi == 0.08);
    CHECK(t.text() == "(0.04, 0.08]");
  }

  const auto asym = load_model("asym_two_sink");
  const std::vector<double> fine{0.02, 0.015, 0.01};
  const auto ra = run_sweep(asym.system(), asym.refs, fine, SweepOptions{});
  for (const auto& t : threshold_estimate(ra)) {
    CHECK(t.kind == ThresholdKind::Censored);
    CHECK(t.text() == ">= 0.02 (top of sweep)");
  }

  const std::vector<double> coarse{0.2, 0.15, 0.1};
  const auto ns = load_model("north_south");
  const auto rc = run_sweep(ns.system(), ns.refs, coarse, SweepOptions{});
  for (const auto& t : threshold_estimate(rc)) {
    CHECK(t.kind == ThresholdKind::BelowRange);
    CHECK(t.text() == "below sweep range");
  }

  SweepReport two = rc;
  two.records.resize(2);
  CHECK_THROWS_AS(threshold_estimate(two), Error);
}

TEST_CASE("asymmetric weights follow the deterministic basin lengths") {
  const auto m = load_model("asym_two_sink");
  const auto fp = oracle::asym_fixed_points_closed_form(0.03, 0.05);
  // sinks at 0 and 1/2, sources fp[1] and fp[3]
  const double basin_half = fp[3] - fp[1];
  const std::vector<double> eps{0.01};
  const auto r = run_sweep(m.system(), m.refs, eps, SweepOptions{});
  const auto& e = r.records[0];
  REQUIRE(e.l == 2);
  for (std::size_t i = 0; i < m.refs.size(); ++i) {
    const double x = m.refs[i].carrier[0].x;
    const double expect = std::fabs(x - 0.5) < 1e-9 ? basin_half : 1.0 - basin_half;
    const auto k = static_cast<std::size_t>(e.class_of_ref[i]);
    CHECK(std::fabs(e.beta[k] - expect) <= 0.03);
    CHECK(m.refs[i].basin_volume() == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("sweep input validation") {
  const auto m = load_model("north_south");
  const std::vector<double> zero{0.04, 0.0};
  CHECK_THROWS_WITH_AS(run_sweep(m.system(), m.refs, zero, SweepOptions{}), doctest::Contains("degenerate noise"), Error);
  const std::vector<double> up{0.02, 0.04};
  CHECK_THROWS_WITH_AS(run_sweep(m.system(), m.refs, up, SweepOptions{}), doctest::Contains("strictly decreasing"),
                       Error);
  const std::vector<double> none;
  CHECK_THROWS_AS(run_sweep(m.system(), m.refs, none, SweepOptions{}), Error);
}

TEST_CASE("failed sweep leaves an incomplete report naming the epsilon") {
  const auto m = load_model("north_south");
  SweepOptions o;
  o.out_dir = scratch_dir("partial").string();
  o.policy.max_cells = 50;
  const std::vector<double> eps{0.1, 0.05};
  CHECK_THROWS_WITH_AS(run_sweep(m.system(), m.refs, eps, o), doctest::Contains("(epsilon 0.05)"), Error);
  const json j = read_json(fs::path(o.out_dir) / "report.json");
  CHECK(j["complete"] == false);
  CHECK(j["records"].size() == 1);
  CHECK(j["thresholds"].empty());
}

TEST_CASE("report directory layout and schema") {
  const auto& r = north_south_report();
  const fs::path dir = fs::temp_directory_path() / "rdslab_test_ns_sweep";
  const json j = read_json(dir / "report.json");
  for (const char* k : {"schema_version", "complete", "model", "config", "seed", "epsilons", "partition_policy",
                        "mc_budget", "refs", "records", "thresholds", "checks_pass"})
    CHECK_MESSAGE(j.contains(k), k);
  CHECK(j["schema_version"] == 1);
  CHECK(j["complete"] == true);
  CHECK(j["model"] == "north_south");
  CHECK(j["epsilons"].size() == 4);
  CHECK(j["thresholds"].size() == 2);
  CHECK(j["thresholds"][0]["kind"] == "interval");
  REQUIRE(j["records"].size() == r.records.size());
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    const json& rec = j["records"][k];
    for (const char* key : {"epsilon", "dir", "nx", "ny", "cells", "cell_width", "nnz", "l", "matched", "beta",
                            "beta_sum", "mu_file", "markov_file", "markov_meta", "absorption_file", "classes", "mc",
                            "hull_distance", "clamp_events", "diagnostics"})
      CHECK_MESSAGE(rec.contains(key), key);
    CHECK(rec["l"] == r.records[k].l);
    CHECK(rec["epsilon"].get<double>() == r.records[k].epsilon);
    // file paths are relative to the report directory
    const fs::path& ed = dir;
    CHECK(fs::is_directory(dir / rec["dir"].get<std::string>()));
    for (const char* key : {"mu_file", "markov_file", "markov_meta", "absorption_file"})
      CHECK(fs::exists(ed / rec[key].get<std::string>()));
    for (const json& c : rec["classes"]) {
      for (const char* key : {"index", "first_cell", "size", "status", "refs", "ref", "beta", "w1_ref",
                              "hausdorff_ref", "support_cells", "measure_file"})
        CHECK_MESSAGE(c.contains(key), key);
      CHECK(fs::exists(ed / c["measure_file"].get<std::string>()));
    }
    CHECK(rec["mc"]["metric"] == "w1");
    CHECK(fs::exists(ed / rec["mc"]["file"].get<std::string>()));

    const Partition part = r.records[k].part;
    std::ifstream mu_in(ed / rec["mu_file"].get<std::string>());
    const auto mu = read_measure_csv(mu_in, part);
    CHECK(w1_distance(mu, r.records[k].assembled) <= 1e-12);
    std::ifstream csv(ed / rec["markov_file"].get<std::string>());
    std::ifstream meta(ed / rec["markov_meta"].get<std::string>());
    const auto mk = read_markov(csv, meta);
    CHECK(mk.partition() == part);
    CHECK(mk.nnz() == r.records[k].nnz);
  }
  // the merged record
  CHECK(j["records"][0]["classes"][0]["status"] == "merged");
  CHECK(j["records"][0]["classes"][0]["ref"].is_null());
}

TEST_CASE("report JSON is reproducible") {
  const auto m = load_model("asym_two_sink");
  SweepOptions o;
  o.mc = {500, 1, 20};
  o.seed = 99;
  const std::vector<double> eps{0.02};
  const auto a = report_json(run_sweep(m.system(), m.refs, eps, o), o);
  const auto b = report_json(run_sweep(m.system(), m.refs, eps, o), o);
  CHECK(a == b);
}

TEST_CASE("basin growth on north_south") {
  const auto m = load_model("north_south");
  const std::vector<double> eps{0.04, 0.02, 0.01};
  const std::vector<double> probes{0.0, 0.2, 0.25};
  const auto t = basin_growth_check(m.system(), m.refs[0], eps, probes, PartitionPolicy{});
  REQUIRE(t.alpha.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(t.alpha[k][0] == 1.0);
    CHECK(!t.merged[k]);
    CHECK(std::fabs(t.alpha[k][2] - 0.5) <= 0.05);
  }
  CHECK(t.probe_nondecreasing[1]);
  CHECK(t.probe_reaches_one[1]);
  CHECK(!t.probe_reaches_one[2]);
  for (std::size_t k = 1; k < 3; ++k) CHECK(t.basin_fraction[k] >= t.basin_fraction[k - 1] - 1e-12);
}

TEST_CASE("model_refs.json content") {
  for (const auto& name : model_names()) {
    const auto m = load_model(name);
    const json j = json::parse(model_refs_json(m));
    CHECK(j["schema_version"] == 1);
    CHECK(j["model"] == name);
    CHECK(j["refs"].size() == m.refs.size());
    CHECK(j["space"]["kind"].is_string());
    CHECK(j.contains("extras"));
    for (const json& r : j["refs"]) {
      CHECK(r["carrier"].size() == r["weights"].size());
      double s = 0.0;
      for (const json& w : r["weights"]) s += w.get<double>();
      CHECK(s == doctest::Approx(1.0));
    }
  }
  const json b = json::parse(model_refs_json(load_model("bowen")));
  CHECK(b["extras"]["saddles"].size() == 2);
  CHECK(b["refs"][0]["basin_volume"].is_null());
  const json e = json::parse(model_refs_json(load_model("example1")));
  CHECK(e["extras"]["sinks"].size() == 12);
  CHECK(e["extras"]["degenerate_point"][0] == 0.5);
}

TEST_CASE("atomic write replaces the file") {
  const fs::path dir = scratch_dir("atomic");
  const std::string path = (dir / "x.json").string();
  write_file_atomic(path, "one");
  write_file_atomic(path, "two");
  std::ifstream in(path);
  std::string s;
  in >> s;
  CHECK(s == "two");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
}
