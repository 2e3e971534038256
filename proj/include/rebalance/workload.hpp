#pragma once

// Synthetic workloads: Zipf-skewed key frequencies and a fluctuation step that
// swaps frequencies between keys on different instances.

#include <cstddef>
#include <cstdint>

#include "rebalance/core.hpp"

namespace rebalance {

// Which instances must reach the fluctuation target.
enum class FluctuationTarget { Max, All };

struct GeneratorConfig {
  std::size_t key_count = 10000;
  double skew = 0.85;
  double fluctuation = 1.0;
  std::int64_t tuples_per_interval = 10'000'000;
  Cost cost_per_tuple = 1;
  Memory mem_per_tuple = 1;
  std::uint64_t seed = 0;
  FluctuationTarget target = FluctuationTarget::Max;

  // Throws ConfigError naming "keys", "skew", "fluctuation", "tuples",
  // "cost_per_tuple" or "mem_per_tuple".
  void validate() const;
};

/// Id of the key with the given Zipf rank (0-based). Distinct per rank.
KeyId key_for_rank(std::uint64_t seed, std::size_t rank);

/// Frequencies proportional to (rank+1)^-skew summing exactly to
/// tuples_per_interval (largest remainder). Index = rank.
std::vector<std::int64_t> zipf_frequencies(const GeneratorConfig& cfg);

/// One snapshot: cost = g * cost_per_tuple, mem_history = {g * mem_per_tuple}.
WorkloadSnapshot zipf_interval(const GeneratorConfig& cfg, std::int64_t interval);

struct FluctuationResult {
  WorkloadSnapshot snapshot;  // interval = prev.interval() + 1
  std::size_t swaps = 0;
  double displacement = 0.0;  // max_d |L_new(d) - L_prev(d)| / mean
};

/// Swaps (frequency, cost, memory) between random key pairs whose destinations
/// under `f` differ until the per-instance load change reaches `rate` of the
/// mean load. Gives up after 100 * K attempts with Unreachable.
FluctuationResult fluctuate(const WorkloadSnapshot& prev, double rate,
                            const AssignmentFunction& f, std::uint64_t seed,
                            FluctuationTarget target = FluctuationTarget::Max);

}  // namespace rebalance
