#pragma once

// Experiment harness: configuration, parameter sweeps over the simulator and
// the hash-only skewness CDF.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rebalance/core.hpp"
#include "rebalance/sim.hpp"
#include "rebalance/workload.hpp"

namespace rebalance {

struct Sweep {
  std::string parameter;
  std::vector<double> values;
};

struct ExperimentSpec {
  TopologyConfig topo;
  GeneratorConfig gen;
  std::size_t intervals = 50;
  std::size_t repeats = 1;
  std::vector<Algorithm> algorithms{Algorithm::Mixed, Algorithm::MinTable,
                                    Algorithm::MinMig};
  std::vector<Sweep> sweeps;
  std::filesystem::path output_dir = "results";
  bool compact_planner = true;
  bool time_plans = false;

  void validate() const;  // throws ConfigError
};

/// Command-line values; each one set overrides the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> keys;
  std::optional<double> skew;
  std::optional<double> fluctuation;
  std::optional<double> theta_max;
  std::optional<double> beta;
  std::optional<int> level_r;
  std::optional<std::size_t> window;
  std::optional<std::size_t> instances;
  std::optional<std::size_t> table_capacity;
  std::optional<std::filesystem::path> output_dir;
};

inline constexpr std::string_view kSeedEnvVar = "REBALANCE_LAB_SEED";

/// Parses a JSON configuration text. Precedence: flags, then file, then the
/// seed environment variable (seed only), then defaults.
ExperimentSpec parse_config_text(std::string_view json_text, const Overrides& flags);

/// Reads `file` when given; an absent path means an empty configuration.
ExperimentSpec parse_config(const std::optional<std::filesystem::path>& file,
                            const Overrides& flags);

/// Sets one sweepable parameter by name; throws ConfigError on unknown names.
void set_parameter(ExperimentSpec& spec, std::string_view name, double value);

struct PointSummary {
  std::string sweep;
  double value = 0.0;
  Algorithm algorithm = Algorithm::Mixed;
  std::filesystem::path csv;
  // Per repeat: mean over intervals (episodes: count).
  std::vector<double> migration_cost_pct;
  std::vector<double> max_load_ratio;
  std::vector<double> table_size;
  std::vector<double> plan_micros;
  std::vector<double> episodes;
  bool checks_clean = true;
};

struct MatrixResult {
  std::vector<PointSummary> points;
  std::vector<std::filesystem::path> summaries;
};

/// Runs every (sweep point, algorithm) for `repeats` seeds and writes one CSV
/// per pair plus one summary JSON per sweep. With no sweeps a single "base"
/// point is run.
MatrixResult run_matrix(const ExperimentSpec& spec);

struct CdfResult {
  std::vector<double> loads;  // per-instance mean load, ascending
  double max_min_ratio = 0.0;
};

/// Hash-only placement of the fluctuating workload, averaged over intervals.
CdfResult skewness_cdf(const ExperimentSpec& spec);

void write_cdf_csv(std::ostream& out, const CdfResult& cdf);

}  // namespace rebalance
