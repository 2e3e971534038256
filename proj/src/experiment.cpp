#include "rebalance/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rebalance/errors.hpp"

namespace rebalance {

namespace {

using nlohmann::json;

// Values at production scale, listed when the run departs from them.
constexpr std::size_t kReferenceKeys = 1'000'000;

template <typename T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

std::size_t get_count(const json& j, const std::string& field) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw ConfigError(field, "expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

bool is_integral(double v) { return std::floor(v) == v && std::abs(v) < 9e15; }

std::string format_number(double v) {
  if (is_integral(v)) return std::to_string(static_cast<std::int64_t>(v));
  return format_decimal(v);
}

std::string point_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  std::string s = buf;
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

void write_atomically(const std::filesystem::path& path, const std::string& body) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out << body;
    if (!out) throw Error("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp + " to " + path.string() + ": " + ec.message());
}

struct Job {
  std::string sweep;
  double value = 0.0;
  ExperimentSpec spec;
  Algorithm algorithm;
  std::filesystem::path csv;
};

PointSummary run_job(const Job& job) {
  PointSummary p;
  p.sweep = job.sweep;
  p.value = job.value;
  p.algorithm = job.algorithm;
  p.csv = job.csv;

  const std::size_t n_int = job.spec.intervals;
  std::vector<double> ratio(n_int, 0.0), cost(n_int, 0.0), table(n_int, 0.0),
      micros(n_int, 0.0), rebalanced(n_int, 0.0);
  const auto reps = static_cast<double>(job.spec.repeats);
  for (std::size_t r = 0; r < job.spec.repeats; ++r) {
    TopologyConfig topo = job.spec.topo;
    GeneratorConfig gen = job.spec.gen;
    topo.seed += r;
    gen.seed += r;
    SimOptions opts;
    opts.algorithm = job.algorithm;
    opts.compact_planner = job.spec.compact_planner;
    opts.measure_plan_time = job.spec.time_plans;
    const SimResult res = run(topo, gen, n_int, opts);

    double c = 0, m = 0, t = 0, us = 0;
    for (std::size_t i = 0; i < n_int; ++i) {
      const auto& row = res.rows[i];
      ratio[i] += row.max_load_ratio / reps;
      cost[i] += row.migration_cost_pct / reps;
      table[i] += static_cast<double>(row.table_size) / reps;
      micros[i] += static_cast<double>(row.plan_micros) / reps;
      rebalanced[i] += (row.rebalanced ? 1.0 : 0.0) / reps;
      c += row.migration_cost_pct;
      m += row.max_load_ratio;
      t += static_cast<double>(row.table_size);
      us += static_cast<double>(row.plan_micros);
    }
    const auto n = static_cast<double>(n_int);
    p.migration_cost_pct.push_back(c / n);
    p.max_load_ratio.push_back(m / n);
    p.table_size.push_back(t / n);
    p.plan_micros.push_back(us / n);
    p.episodes.push_back(static_cast<double>(res.episodes));
    p.checks_clean = p.checks_clean && res.checks.clean();
  }

  std::ostringstream csv;
  csv << kMetricsHeader << '\n';
  for (std::size_t i = 0; i < n_int; ++i) {
    csv << i << ',' << format_decimal(ratio[i]) << ',' << format_decimal(cost[i])
        << ',' << format_number(table[i]) << ',' << format_number(micros[i]) << ','
        << format_number(rebalanced[i]) << '\n';
  }
  write_atomically(job.csv, csv.str());
  return p;
}

json aggregate(const std::vector<double>& v) {
  json j;
  j["mean"] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  j["min"] = *std::min_element(v.begin(), v.end());
  j["max"] = *std::max_element(v.begin(), v.end());
  return j;
}

json deviations(const ExperimentSpec& spec) {
  json d = json::array();
  if (spec.gen.key_count != kReferenceKeys) {
    d.push_back({{"field", "keys"}, {"value", spec.gen.key_count},
                 {"reference", kReferenceKeys}, {"reason", "desk-scale key count"}});
  }
  d.push_back({{"field", "intervals"}, {"value", spec.intervals},
               {"reason", "desk-scale run length"}});
  d.push_back({{"field", "rebalanced"},
               {"reason", "CSV column is the fraction of repeats that rebalanced"}});
  if (!spec.time_plans) {
    d.push_back({{"field", "plan_micros"},
                 {"reason", "timing disabled so outputs stay byte-deterministic"}});
  }
  return d;
}

}  // namespace

void ExperimentSpec::validate() const {
  topo.validate();
  gen.validate();
  if (intervals < 1) throw ConfigError("intervals", "must be >= 1");
  if (repeats < 1) throw ConfigError("repeats", "must be >= 1");
  if (algorithms.empty()) throw ConfigError("algorithms", "must not be empty");
  for (const auto& s : sweeps) {
    ExperimentSpec probe = *this;
    probe.sweeps.clear();
    if (s.values.empty()) throw ConfigError("sweeps." + s.parameter, "no values");
    for (double v : s.values) set_parameter(probe, s.parameter, v);
  }
}

void set_parameter(ExperimentSpec& spec, std::string_view name, double value) {
  const std::string field(name);
  auto count = [&]() -> std::size_t {
    if (!is_integral(value) || value < 0) {
      throw ConfigError(field, "expected a non-negative integer");
    }
    return static_cast<std::size_t>(value);
  };
  if (name == "keys") spec.gen.key_count = count();
  else if (name == "skew") spec.gen.skew = value;
  else if (name == "fluctuation") spec.gen.fluctuation = value;
  else if (name == "tuples") spec.gen.tuples_per_interval = static_cast<std::int64_t>(count());
  else if (name == "theta_max") spec.topo.theta_max = value;
  else if (name == "beta") spec.topo.beta = value;
  else if (name == "level_r") spec.topo.level_r = static_cast<int>(count());
  else if (name == "window") spec.topo.window = count();
  else if (name == "instances") spec.topo.n_downstream = count();
  else if (name == "table_capacity") spec.topo.table_capacity = count();
  else throw ConfigError(field, "not a sweepable parameter");
  spec.topo.validate();
  spec.gen.validate();
}

ExperimentSpec parse_config_text(std::string_view json_text, const Overrides& flags) {
  ExperimentSpec spec;
  json root = json::object();
  const auto first = json_text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos) {
    try {
      root = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw ConfigError("config", e.what());
    }
  }
  if (!root.is_object()) throw ConfigError("config", "top level must be an object");

  bool seed_from_file = false;
  for (const auto& [field, v] : root.items()) {
    if (field == "seed") {
      spec.topo.seed = spec.gen.seed = get_as<std::uint64_t>(v, field);
      seed_from_file = true;
    } else if (field == "intervals") {
      spec.intervals = get_count(v, field);
    } else if (field == "repeats") {
      spec.repeats = get_count(v, field);
    } else if (field == "upstream") {
      spec.topo.n_upstream = get_count(v, field);
    } else if (field == "cost_per_tuple") {
      spec.gen.cost_per_tuple = get_as<Cost>(v, field);
    } else if (field == "mem_per_tuple") {
      spec.gen.mem_per_tuple = get_as<Memory>(v, field);
    } else if (field == "fluctuation_target") {
      const auto t = get_as<std::string>(v, field);
      if (t == "max") spec.gen.target = FluctuationTarget::Max;
      else if (t == "all") spec.gen.target = FluctuationTarget::All;
      else throw ConfigError(field, "expected \"max\" or \"all\"");
    } else if (field == "algorithms") {
      spec.algorithms.clear();
      for (const auto& a : get_as<std::vector<std::string>>(v, field)) {
        spec.algorithms.push_back(parse_algorithm(a));
      }
    } else if (field == "sweeps") {
      if (!v.is_object()) throw ConfigError(field, "expected an object");
      for (const auto& [name, values] : v.items()) {
        spec.sweeps.push_back(
            {name, get_as<std::vector<double>>(values, "sweeps." + name)});
      }
    } else if (field == "output_dir") {
      spec.output_dir = get_as<std::string>(v, field);
    } else if (field == "planner") {
      const auto p = get_as<std::string>(v, field);
      if (p == "compact") spec.compact_planner = true;
      else if (p == "full") spec.compact_planner = false;
      else throw ConfigError(field, "expected \"compact\" or \"full\"");
    } else if (field == "time_plans") {
      spec.time_plans = get_as<bool>(v, field);
    } else if (v.is_number()) {
      set_parameter(spec, field, v.get<double>());
    } else {
      throw ConfigError(field, "unknown field or wrong type");
    }
  }

  if (flags.seed) {
    spec.topo.seed = spec.gen.seed = *flags.seed;
  } else if (!seed_from_file) {
    if (const char* env = std::getenv(std::string(kSeedEnvVar).c_str())) {
      char* end = nullptr;
      const auto s = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0') {
        throw ConfigError("seed", std::string(kSeedEnvVar) + " is not an integer");
      }
      spec.topo.seed = spec.gen.seed = s;
    }
  }
  if (flags.keys) spec.gen.key_count = *flags.keys;
  if (flags.skew) spec.gen.skew = *flags.skew;
  if (flags.fluctuation) spec.gen.fluctuation = *flags.fluctuation;
  if (flags.theta_max) spec.topo.theta_max = *flags.theta_max;
  if (flags.beta) spec.topo.beta = *flags.beta;
  if (flags.level_r) spec.topo.level_r = *flags.level_r;
  if (flags.window) spec.topo.window = *flags.window;
  if (flags.instances) spec.topo.n_downstream = *flags.instances;
  if (flags.table_capacity) spec.topo.table_capacity = *flags.table_capacity;
  if (flags.output_dir) spec.output_dir = *flags.output_dir;
  spec.validate();
  return spec;
}

ExperimentSpec parse_config(const std::optional<std::filesystem::path>& file,
                            const Overrides& flags) {
  if (!file) return parse_config_text("", flags);
  std::ifstream in(*file);
  if (!in) throw ConfigError("config", "cannot read " + file->string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), flags);
}

MatrixResult run_matrix(const ExperimentSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(spec.output_dir);

  std::vector<Sweep> sweeps = spec.sweeps;
  const bool base_only = sweeps.empty();
  if (base_only) sweeps.push_back({"base", {0.0}});

  std::vector<Job> jobs;
  for (const auto& s : sweeps) {
    for (double v : s.values) {
      ExperimentSpec point = spec;
      if (!base_only) set_parameter(point, s.parameter, v);
      for (Algorithm a : spec.algorithms) {
        const std::string label = base_only ? "base" : s.parameter + "-" + point_label(v);
        jobs.push_back({s.parameter, v, point, a,
                        spec.output_dir / (std::string(algorithm_name(a)) + "_" +
                                           label + ".csv")});
      }
    }
  }

  // Independent points run concurrently; results are gathered in job order.
  MatrixResult out;
  out.points.resize(jobs.size());
  const std::size_t width = std::max(1U, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < jobs.size(); start += width) {
    std::vector<std::future<PointSummary>> batch;
    const std::size_t end = std::min(jobs.size(), start + width);
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, run_job, std::cref(jobs[i])));
    }
    for (std::size_t i = start; i < end; ++i) out.points[i] = batch[i - start].get();
  }

  for (const auto& s : sweeps) {
    json summary;
    summary["schema_version"] = 1;
    summary["sweep"] = s.parameter;
    summary["repeats"] = spec.repeats;
    summary["intervals"] = spec.intervals;
    summary["base_seed"] = spec.gen.seed;
    summary["deviations"] = deviations(spec);
    json pts = json::array();
    for (const auto& p : out.points) {
      if (p.sweep != s.parameter) continue;
      json j;
      j["value"] = p.value;
      j["algorithm"] = algorithm_name(p.algorithm);
      j["csv"] = p.csv.filename().string();
      j["migration_cost_pct"] = aggregate(p.migration_cost_pct);
      j["max_load_ratio"] = aggregate(p.max_load_ratio);
      j["table_size"] = aggregate(p.table_size);
      j["plan_micros"] = aggregate(p.plan_micros);
      j["episodes"] = aggregate(p.episodes);
      j["protocol_checks_clean"] = p.checks_clean;
      pts.push_back(std::move(j));
    }
    summary["points"] = std::move(pts);
    const auto path = spec.output_dir / (s.parameter + "_summary.json");
    write_atomically(path, summary.dump(2) + "\n");
    out.summaries.push_back(path);
  }
  return out;
}

CdfResult skewness_cdf(const ExperimentSpec& spec) {
  spec.validate();
  const AssignmentFunction f(spec.topo.n_downstream);
  WorkloadSnapshot snap = zipf_interval(spec.gen, 0);
  std::vector<double> sum(spec.topo.n_downstream, 0.0);
  for (std::size_t i = 0; i < spec.intervals; ++i) {
    if (i > 0) {
      snap = fluctuate(snap, spec.gen.fluctuation, f, mix64(spec.gen.seed) + i,
                       spec.gen.target).snapshot;
    }
    const auto l = loads(f, snap);
    for (std::size_t d = 0; d < l.size(); ++d) sum[d] += static_cast<double>(l[d]);
  }
  CdfResult out;
  for (double s : sum) out.loads.push_back(s / static_cast<double>(spec.intervals));
  std::sort(out.loads.begin(), out.loads.end());
  out.max_min_ratio = out.loads.front() > 0.0 ? out.loads.back() / out.loads.front()
                                              : std::numeric_limits<double>::infinity();
  return out;
}

void write_cdf_csv(std::ostream& out, const CdfResult& cdf) {
  out << "rank,percentile,mean_load,normalized_load\n";
  const double mean = std::accumulate(cdf.loads.begin(), cdf.loads.end(), 0.0) /
                      static_cast<double>(cdf.loads.size());
  for (std::size_t i = 0; i < cdf.loads.size(); ++i) {
    const double pct = 100.0 * static_cast<double>(i + 1) /
                       static_cast<double>(cdf.loads.size());
    out << i + 1 << ',' << format_decimal(pct) << ',' << format_decimal(cdf.loads[i])
        << ',' << format_decimal(mean > 0.0 ? cdf.loads[i] / mean : 0.0) << '\n';
  }
}

}  // namespace rebalance
