#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rdslab/models.hpp"

namespace rdslab::cli {

enum ExitCode : int { kOk = 0, kChecksFailed = 1, kConfigError = 2 };

/// Fully resolved settings of one invocation.
struct RunConfig {
  std::string command;
  std::string model;
  ModelParams params;
  std::vector<double> eps;
  double cells_per_eps = 8.0;
  std::size_t min_cells = 8;
  std::size_t max_cells = 1u << 16;
  std::size_t n = 0;
  std::size_t samples = 1;
  std::size_t x_samples = 1;
  std::size_t samples_per_cell = 256;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<double> probes;
  std::optional<double> x;
  std::optional<double> y;

  /// JSON object with every field, used as the config.json sidecar.
  std::string to_json() const;
};

/// Runs the command line (argv[0] excluded). Output paths go to `out`,
/// diagnostics to `err`; the return value is the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rdslab::cli
