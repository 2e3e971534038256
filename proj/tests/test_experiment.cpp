#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rebalance/errors.hpp"
#include "rebalance/experiment.hpp"

using namespace rebalance;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rebalance_lab_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentSpec tiny_spec(const fs::path& out) {
  ExperimentSpec spec = parse_config_text(
      R"({"keys": 500, "tuples": 50000, "intervals": 4, "algorithms": ["Mixed"]})", {});
  spec.output_dir = out;
  return spec;
}

}  // namespace

TEST(ParseConfig, DefaultsWhenEmpty) {
  unsetenv(std::string(kSeedEnvVar).c_str());
  const auto s = parse_config_text("", {});
  EXPECT_DOUBLE_EQ(s.topo.theta_max, 0.08);
  EXPECT_DOUBLE_EQ(s.topo.beta, 1.5);
  EXPECT_EQ(s.topo.level_r, 3);
  EXPECT_EQ(s.topo.window, 5U);
  EXPECT_EQ(s.topo.n_downstream, 15U);
  EXPECT_EQ(s.topo.table_capacity, 3000U);
  EXPECT_DOUBLE_EQ(s.gen.skew, 0.85);
  EXPECT_DOUBLE_EQ(s.gen.fluctuation, 1.0);
  EXPECT_EQ(s.gen.key_count, 10000U);
  EXPECT_EQ(s.intervals, 50U);
  EXPECT_EQ(s.gen.seed, 0U);
}

TEST(ParseConfig, FlagsOverrideFile) {
  Overrides o;
  o.theta_max = 0.02;
  const auto s = parse_config_text(R"({"theta_max": 0.08, "beta": 2.0})", o);
  EXPECT_DOUBLE_EQ(s.topo.theta_max, 0.02);
  EXPECT_DOUBLE_EQ(s.topo.beta, 2.0);
}

TEST(ParseConfig, NegativeSkewNamesField) {
  try {
    parse_config_text(R"({"skew": -1})", {});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "skew");
  }
  Overrides o;
  o.skew = -1;
  EXPECT_THROW(parse_config_text("", o), ConfigError);
}

TEST(ParseConfig, UnknownFieldsAndBadSweeps) {
  EXPECT_THROW(parse_config_text(R"({"bogus": "x"})", {}), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"sweeps": {"colour": [1]}})", {}), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"algorithms": ["Nope"]})", {}), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"repeats": 0})", {}), ConfigError);
  EXPECT_THROW(parse_config_text("{", {}), ConfigError);
}

TEST(ParseConfig, SeedPrecedence) {
  setenv(std::string(kSeedEnvVar).c_str(), "42", 1);
  EXPECT_EQ(parse_config_text("", {}).gen.seed, 42U);
  EXPECT_EQ(parse_config_text(R"({"seed": 7})", {}).gen.seed, 7U);
  Overrides o;
  o.seed = 9;
  EXPECT_EQ(parse_config_text(R"({"seed": 7})", o).gen.seed, 9U);
  unsetenv(std::string(kSeedEnvVar).c_str());
}

TEST(RunMatrix, SinglePointWritesOneCsvAndOneSummary) {
  const auto dir = fresh_dir("single");
  const auto res = run_matrix(tiny_spec(dir));
  std::size_t csv = 0, js = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    csv += e.path().extension() == ".csv";
    js += e.path().extension() == ".json";
  }
  EXPECT_EQ(csv, 1U);
  EXPECT_EQ(js, 1U);
  const std::string body = slurp(res.points.at(0).csv);
  EXPECT_EQ(body.substr(0, body.find('\n')),
            "interval,max_load_ratio,migration_cost_pct,table_size,plan_micros,rebalanced");
  const auto summary = nlohmann::json::parse(slurp(res.summaries.at(0)));
  EXPECT_EQ(summary["schema_version"], 1);
  EXPECT_TRUE(summary["deviations"].is_array());
  EXPECT_EQ(summary["points"].size(), 1U);
}

TEST(RunMatrix, ByteIdenticalAcrossRuns) {
  auto spec = tiny_spec(fresh_dir("det_a"));
  spec.sweeps.push_back({"theta_max", {0.04, 0.2}});
  spec.repeats = 2;
  spec.algorithms = {Algorithm::Mixed, Algorithm::HashOnly};
  const auto a = run_matrix(spec);
  spec.output_dir = fresh_dir("det_b");
  const auto b = run_matrix(spec);
  ASSERT_EQ(a.points.size(), 4U);
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(slurp(a.points[i].csv), slurp(b.points[i].csv));
  }
  EXPECT_EQ(slurp(a.summaries[0]), slurp(b.summaries[0]));
  for (const auto& p : a.points) {
    if (p.algorithm != Algorithm::HashOnly) continue;
    for (double c : p.migration_cost_pct) EXPECT_EQ(c, 0.0);
  }
}

TEST(SkewnessCdf, UniformKeysAreNearlyFlat) {
  auto spec = parse_config_text(
      R"({"keys": 1000000, "skew": 0, "fluctuation": 0, "intervals": 1, "tuples": 10000000})", {});
  const auto cdf = skewness_cdf(spec);
  EXPECT_EQ(cdf.loads.size(), 15U);
  EXPECT_LE(cdf.max_min_ratio, 1.05);
}

TEST(SkewnessCdf, SkewedKeysSpreadLoad) {
  auto spec = parse_config_text(
      R"({"keys": 10000, "instances": 40, "intervals": 10})", {});
  const auto cdf = skewness_cdf(spec);
  EXPECT_GE(cdf.max_min_ratio, 2.0);
  std::ostringstream out;
  write_cdf_csv(out, cdf);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "rank,percentile,mean_load,normalized_load");
}

TEST(SkewnessCdf, FewerKeysMeansMoreSkew) {
  auto few = parse_config_text(R"({"keys": 5000, "instances": 40, "intervals": 10})", {});
  auto many = parse_config_text(R"({"keys": 100000, "instances": 40, "intervals": 10})", {});
  EXPECT_GT(skewness_cdf(few).max_min_ratio, skewness_cdf(many).max_min_ratio);
}
