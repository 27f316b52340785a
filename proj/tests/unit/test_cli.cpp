#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rdslab/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using rdslab::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = run(args, o, e);
  return {code, o.str(), e.str()};
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rdslab_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json config_of(const fs::path& dir) { return json::parse(slurp(dir / "config.json")); }

struct SeedEnv {
  explicit SeedEnv(const char* v) {
    if (v) {
      setenv("RDSLAB_SEED", v, 1);
    } else {
      unsetenv("RDSLAB_SEED");
    }
  }
  ~SeedEnv() { unsetenv("RDSLAB_SEED"); }
};

}  // namespace

TEST_CASE("usage errors exit with the configuration code") {
  SeedEnv env(nullptr);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"ulam", "--bogus", "1"}).code == 2);
  const auto help = invoke({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("sweep") != std::string::npos);
}

TEST_CASE("unknown model lists the available ones") {
  SeedEnv env(nullptr);
  const auto r = invoke({"ulam", "--model", "lorenz", "--out", fresh("unknown").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown model 'lorenz'") != std::string::npos);
  CHECK(r.err.find("north_south") != std::string::npos);
  CHECK(r.err.find("bowen") != std::string::npos);
  const auto missing = invoke({"ulam"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("--model is required") != std::string::npos);
}

TEST_CASE("validation problems are reported together") {
  SeedEnv env(nullptr);
  const auto r = invoke({"simulate", "--model", "north_south", "--eps", "0", "--n", "-5", "--samples", "abc", "--out",
                         fresh("invalid").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("invalid configuration (3 problems)") != std::string::npos);
  CHECK(r.err.find("degenerate noise") != std::string::npos);
  CHECK(!fs::exists(fresh("invalid")));
}

TEST_CASE("bad model parameters and coarse partitions are configuration errors") {
  SeedEnv env(nullptr);
  CHECK(invoke({"ulam", "--model", "north_south", "--params", "a=0.5", "--out", fresh("params").string()}).code == 2);
  CHECK(invoke({"ulam", "--model", "north_south", "--params", "q=1", "--out", fresh("params").string()}).code == 2);
  const auto r = invoke({"ulam", "--model", "north_south", "--eps", "0.04", "--cells-per-eps", "2", "--out",
                         fresh("coarse").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("partition too coarse") != std::string::npos);
}

TEST_CASE("ulam run writes the report directory") {
  SeedEnv env(nullptr);
  const fs::path dir = fresh("ulam");
  const auto r = invoke({"ulam", "--model", "north_south", "--eps", "0.02,0.04,0.08", "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("eps=0.04") != std::string::npos);
  CHECK(r.out.find("threshold sink_0: (0.04, 0.08]") != std::string::npos);
  for (const char* f : {"config.json", "model_refs.json", "report.json", "eps_0.02/markov.csv", "eps_0.02/mu.csv"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  const json rep = json::parse(slurp(dir / "report.json"));
  CHECK(rep["complete"] == true);
  CHECK(rep["epsilons"] == json::array({0.08, 0.04, 0.02}));
  CHECK(rep["records"][0]["mc"].is_null());
  const json cfg = config_of(dir);
  CHECK(cfg["params"]["a"] == 0.05);
  CHECK(cfg["command"] == "ulam");
}

TEST_CASE("eps above the documented range warns") {
  SeedEnv env(nullptr);
  const auto r = invoke({"ulam", "--model", "north_south", "--eps", "0.2", "--out", fresh("warn").string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("warning: eps 0.2 exceeds") != std::string::npos);
}

TEST_CASE("simulate is byte-for-byte reproducible") {
  SeedEnv env(nullptr);
  auto sim = [](const fs::path& dir, const char* seed) {
    return invoke({"simulate", "--model", "asym_two_sink", "--eps", "0.02", "--n", "2000", "--samples", "2",
                   "--x-samples", "20", "--x", "0.3", "--seed", seed, "--out", dir.string()});
  };
  const fs::path a = fresh("sim_a"), b = fresh("sim_b"), c = fresh("sim_c");
  REQUIRE(sim(a, "42").code == 0);
  REQUIRE(sim(b, "42").code == 0);
  REQUIRE(sim(c, "43").code == 0);
  for (const char* f : {"eps_0.02/sojourn_global.csv", "eps_0.02/sojourn_point.csv"}) {
    CHECK(!slurp(a / f).empty());
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK(slurp(a / f) != slurp(c / f));
  }
  CHECK(fs::exists(a / "simulate.json"));
  CHECK(!fs::exists(a / "model_refs.json"));
}

TEST_CASE("flags override the config file, which overrides RDSLAB_SEED") {
  const fs::path dir = fresh("precedence");
  fs::create_directories(dir);
  const fs::path conf = dir / "run.conf";
  std::ofstream(conf) << "# test config\nmodel = north_south\neps = 0.04, 0.02\nseed = 5\nn = 100\n";
  {
    SeedEnv env("11");
    const fs::path o1 = dir / "o1";
    REQUIRE(invoke({"simulate", "--config", conf.string(), "--seed", "7", "--samples", "1", "--x-samples", "2", "--out",
                    o1.string()})
                .code == 0);
    const json c1 = config_of(o1);
    CHECK(c1["seed"] == 7);
    CHECK(c1["eps"] == json::array({0.04, 0.02}));
    CHECK(c1["n"] == 100);

    const fs::path o2 = dir / "o2";
    REQUIRE(invoke({"simulate", "--config", conf.string(), "--samples", "1", "--x-samples", "2", "--out", o2.string()})
                .code == 0);
    CHECK(config_of(o2)["seed"] == 5);

    const fs::path o3 = dir / "o3";
    REQUIRE(invoke({"simulate", "--model", "north_south", "--eps", "0.04", "--n", "10", "--samples", "1",
                    "--x-samples", "2", "--out", o3.string()})
                .code == 0);
    CHECK(config_of(o3)["seed"] == 11);
  }
  {
    SeedEnv env("eleven");
    CHECK(invoke({"simulate", "--model", "north_south", "--out", (dir / "o4").string()}).code == 2);
  }
  std::ofstream(dir / "bad.conf") << "colour = blue\n";
  const auto r = invoke({"simulate", "--config", (dir / "bad.conf").string(), "--model", "north_south"});
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown key 'colour'") != std::string::npos);
}

TEST_CASE("sweep exit status reflects the Monte Carlo check") {
  SeedEnv env(nullptr);
  const fs::path dir = fresh("sweep_fail");
  const auto r = invoke({"sweep", "--model", "north_south", "--eps", "0.04", "--n", "5", "--samples", "1",
                         "--x-samples", "1", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.out.find("CHECK FAILED") != std::string::npos);
  const json rep = json::parse(slurp(dir / "report.json"));
  CHECK(rep["checks_pass"] == false);
  CHECK(rep["records"][0]["mc"]["pass"] == false);
}

TEST_CASE("basins reports absorption at probes") {
  SeedEnv env(nullptr);
  const fs::path dir = fresh("basins");
  const auto r = invoke({"basins", "--model", "north_south", "--eps", "0.04,0.02,0.01", "--probes", "0,0.2,0.25",
                         "--out", dir.string()});
  CHECK(r.code == 0);
  const json j = json::parse(slurp(dir / "basins.json"));
  CHECK(j.contains("config"));
  CHECK(r.out.find("sink_0 x=0.2:") != std::string::npos);
}
