#include "rebalance/workload.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "rebalance/errors.hpp"

namespace rebalance {

void GeneratorConfig::validate() const {
  if (key_count < 1) throw ConfigError("keys", "must be >= 1");
  if (!(skew >= 0.0)) throw ConfigError("skew", "must be >= 0");
  if (!(fluctuation >= 0.0)) throw ConfigError("fluctuation", "must be >= 0");
  if (tuples_per_interval < 0) throw ConfigError("tuples", "must be >= 0");
  if (cost_per_tuple < 0) throw ConfigError("cost_per_tuple", "must be >= 0");
  if (mem_per_tuple < 0) throw ConfigError("mem_per_tuple", "must be >= 0");
}

KeyId key_for_rank(std::uint64_t seed, std::size_t rank) {
  return KeyId{mix64(mix64(seed) + rank)};
}

std::vector<std::int64_t> zipf_frequencies(const GeneratorConfig& cfg) {
  const std::size_t k = cfg.key_count;
  std::vector<double> weight(k);
  for (std::size_t j = 0; j < k; ++j) {
    weight[j] = std::pow(static_cast<double>(j + 1), -cfg.skew);
  }
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  const auto t = static_cast<double>(cfg.tuples_per_interval);

  std::vector<std::int64_t> freq(k);
  std::vector<double> remainder(k);
  std::int64_t assigned = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double exact = t * weight[j] / total;
    freq[j] = static_cast<std::int64_t>(std::floor(exact));
    remainder[j] = exact - static_cast<double>(freq[j]);
    assigned += freq[j];
  }
  // Hand out the leftover tuples by largest remainder, ties to lower rank.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t i = 0; assigned < cfg.tuples_per_interval; ++i, ++assigned) {
    ++freq[order[i % k]];
  }
  return freq;
}

WorkloadSnapshot zipf_interval(const GeneratorConfig& cfg, std::int64_t interval) {
  cfg.validate();
  const auto freq = zipf_frequencies(cfg);
  std::vector<KeyIntervalStats> stats;
  stats.reserve(freq.size());
  for (std::size_t j = 0; j < freq.size(); ++j) {
    stats.push_back(KeyIntervalStats{key_for_rank(cfg.seed, j), freq[j],
                                     freq[j] * cfg.cost_per_tuple,
                                     {freq[j] * cfg.mem_per_tuple}});
  }
  return WorkloadSnapshot(interval, std::move(stats));
}

FluctuationResult fluctuate(const WorkloadSnapshot& prev, double rate,
                            const AssignmentFunction& f, std::uint64_t seed,
                            FluctuationTarget target) {
  if (prev.empty()) throw InvalidInput("fluctuate needs a nonempty snapshot");
  std::vector<KeyIntervalStats> stats(prev.stats().begin(), prev.stats().end());
  FluctuationResult out;
  if (rate <= 0.0) {
    out.snapshot = WorkloadSnapshot(prev.interval() + 1, std::move(stats));
    return out;
  }

  const std::size_t n = f.n_downstream();
  if (n < 2) throw Unreachable("no pair of keys on different instances");
  std::vector<InstanceId> owner;
  owner.reserve(stats.size());
  for (const auto& s : stats) owner.push_back(f(s.key));
  const std::vector<Cost> before = loads(f, prev);
  std::vector<Cost> now = before;
  const double mean = mean_load(before);
  if (mean <= 0.0) throw Unreachable("total load is zero");

  auto reached = [&] {
    double worst = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < n; ++d) {
      const double change = std::abs(static_cast<double>(now[d] - before[d])) / mean;
      worst = std::max(worst, change);
      best = std::min(best, change);
    }
    out.displacement = worst;
    return (target == FluctuationTarget::Max ? worst : best) >= rate;
  };

  std::mt19937_64 rng(mix64(seed ^ static_cast<std::uint64_t>(prev.interval())));
  std::uniform_int_distribution<std::size_t> pick(0, stats.size() - 1);
  const std::size_t cap = 100 * stats.size();
  for (std::size_t attempt = 0; attempt < cap; ++attempt) {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    if (owner[a] == owner[b]) continue;
    now[owner[a].index] += stats[b].cost - stats[a].cost;
    now[owner[b].index] += stats[a].cost - stats[b].cost;
    std::swap(stats[a].frequency, stats[b].frequency);
    std::swap(stats[a].cost, stats[b].cost);
    std::swap(stats[a].mem_history, stats[b].mem_history);
    ++out.swaps;
    if (reached()) {
      out.snapshot = WorkloadSnapshot(prev.interval() + 1, std::move(stats));
      return out;
    }
  }
  throw Unreachable("fluctuation " + std::to_string(rate) + " not reached in " +
                    std::to_string(cap) + " attempts");
}

}  // namespace rebalance
