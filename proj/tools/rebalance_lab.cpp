// rebalance_lab: run parameter sweeps, the hash-only skewness CDF, or the
// worked examples.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rebalance/errors.hpp"
#include "rebalance/experiment.hpp"
#include "rebalance/scenarios.hpp"

namespace {

using namespace rebalance;

struct Flags {
  std::string config;
  Overrides o;
};

void add_common(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", f.o.output_dir, "Output directory");
  app.add_option("--seed", f.o.seed, "Base seed (fallback: REBALANCE_LAB_SEED)");
  app.add_option("--keys", f.o.keys, "Number of keys");
  app.add_option("--skew", f.o.skew, "Zipf exponent");
  app.add_option("--fluctuation", f.o.fluctuation, "Fluctuation rate");
  app.add_option("--theta-max", f.o.theta_max, "Imbalance tolerance");
  app.add_option("--beta", f.o.beta, "Exponent of the migration priority index");
  app.add_option("--level-r", f.o.level_r, "Discretization exponent (R = 2^r)");
  app.add_option("--window", f.o.window, "Memory window in intervals");
  app.add_option("--instances", f.o.instances, "Downstream instances");
  app.add_option("--table-capacity", f.o.table_capacity, "Routing table capacity");
}

ExperimentSpec load(const Flags& f) {
  std::optional<std::filesystem::path> file;
  if (!f.config.empty()) file = f.config;
  return parse_config(file, f.o);
}

int cmd_run(const Flags& f) {
  const ExperimentSpec spec = load(f);
  const MatrixResult res = run_matrix(spec);
  for (const auto& p : res.points) std::cout << p.csv.string() << '\n';
  for (const auto& s : res.summaries) std::cout << s.string() << '\n';
  return 0;
}

int cmd_cdf(const Flags& f) {
  const ExperimentSpec spec = load(f);
  const CdfResult cdf = skewness_cdf(spec);
  std::filesystem::create_directories(spec.output_dir);
  const auto path = spec.output_dir / "skewness_cdf.csv";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_cdf_csv(out, cdf);
  std::cout << path.string() << " max/min=" << format_decimal(cdf.max_min_ratio, 3) << '\n';
  return 0;
}

int cmd_golden() {
  int failed = 0;
  for (const auto& c : run_golden_checks()) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) std::cout << " [" << c.detail << "]";
    std::cout << '\n';
    failed += c.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Workload rebalancing lab"};
  app.require_subcommand(1);
  Flags run_flags, cdf_flags;
  auto* run = app.add_subcommand("run", "Run the experiment matrix");
  add_common(*run, run_flags);
  auto* cdf = app.add_subcommand("cdf", "Skewness CDF under hash-only placement");
  add_common(*cdf, cdf_flags);
  auto* golden = app.add_subcommand("golden", "Check the worked examples");

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (cdf->parsed()) return cmd_cdf(cdf_flags);
    if (golden->parsed()) return cmd_golden();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
