#pragma once

// Domain model for key-partitioned operators: keys, instances, per-interval
// workload statistics, the mixed hash/routing-table assignment function and
// the load, balance and migration metrics defined over it.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace rebalance {

using Cost = std::int64_t;    // compute units
using Memory = std::int64_t;  // memory units

struct KeyId {
  std::uint64_t value = 0;
  friend auto operator<=>(const KeyId&, const KeyId&) = default;
};

struct InstanceId {
  std::uint32_t index = 0;
  friend auto operator<=>(const InstanceId&, const InstanceId&) = default;
};

inline constexpr std::size_t kUnboundedCapacity =
    std::numeric_limits<std::size_t>::max();

struct TopologyConfig {
  std::size_t n_upstream = 10;
  std::size_t n_downstream = 15;
  std::size_t window = 5;
  double theta_max = 0.08;
  std::size_t table_capacity = 3000;
  double beta = 1.5;
  int level_r = 3;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

struct KeyIntervalStats {
  KeyId key;
  std::int64_t frequency = 0;
  Cost cost = 0;
  // Oldest first; at most `window` values are meaningful.
  std::vector<Memory> mem_history;

  /// Sum of the most recent `w` memory values (fewer if history is short).
  Memory windowed_memory(std::size_t w) const;
};

/// Statistics for one interval, keyed and sorted by KeyId.
class WorkloadSnapshot {
 public:
  WorkloadSnapshot() = default;
  // Throws InvalidInput on duplicate keys or negative values.
  WorkloadSnapshot(std::int64_t interval, std::vector<KeyIntervalStats> stats);

  std::int64_t interval() const noexcept { return interval_; }
  std::span<const KeyIntervalStats> stats() const noexcept { return stats_; }
  std::size_t size() const noexcept { return stats_.size(); }
  bool empty() const noexcept { return stats_.empty(); }

  const KeyIntervalStats* find(KeyId key) const;
  const KeyIntervalStats& at(KeyId key) const;  // throws UnknownKey
  std::size_t index_of(KeyId key) const;        // throws UnknownKey

  std::vector<KeyId> keys() const;
  Cost total_cost() const;
  Memory total_memory(std::size_t w) const;

 private:
  std::int64_t interval_ = 0;
  std::vector<KeyIntervalStats> stats_;
};

/// splitmix64 finalizer; a bijection on 64-bit values.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic, platform-stable key hash reduced onto [0, n_downstream).
InstanceId hash(KeyId key, std::size_t n_downstream);

/// Explicit key -> instance overrides on top of the hash. Canonical: an entry
/// never maps a key to its own hash destination.
class RoutingTable {
 public:
  using Entries = std::map<KeyId, InstanceId>;

  explicit RoutingTable(std::size_t n_downstream,
                        std::size_t capacity = kUnboundedCapacity);

  // Returns false (and drops any existing entry) when d == hash(key).
  bool assign(KeyId key, InstanceId d);
  bool erase(KeyId key);
  void clear() { entries_.clear(); }

  std::optional<InstanceId> lookup(KeyId key) const;
  bool contains(KeyId key) const { return entries_.contains(key); }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  void set_capacity(std::size_t capacity) { capacity_ = capacity; }
  bool over_capacity() const noexcept { return entries_.size() > capacity_; }
  std::size_t n_downstream() const noexcept { return n_downstream_; }
  const Entries& entries() const noexcept { return entries_; }

  friend bool operator==(const RoutingTable& a, const RoutingTable& b) {
    return a.n_downstream_ == b.n_downstream_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t n_downstream_;
  std::size_t capacity_;
  Entries entries_;
};

class AssignmentFunction {
 public:
  explicit AssignmentFunction(std::size_t n_downstream,
                              std::size_t capacity = kUnboundedCapacity)
      : table_(n_downstream, capacity) {}
  explicit AssignmentFunction(RoutingTable table) : table_(std::move(table)) {}

  InstanceId operator()(KeyId key) const;

  const RoutingTable& table() const noexcept { return table_; }
  RoutingTable& table() noexcept { return table_; }
  std::size_t n_downstream() const noexcept { return table_.n_downstream(); }

 private:
  RoutingTable table_;
};

InstanceId evaluate(const AssignmentFunction& f, KeyId key);

Cost load(InstanceId d, const AssignmentFunction& f,
          const WorkloadSnapshot& snap);
std::vector<Cost> loads(const AssignmentFunction& f,
                        const WorkloadSnapshot& snap);

double mean_load(std::span<const Cost> loads);

// |L(d) - mean| / mean. Throws ZeroTotalLoad when the mean is zero.
double balance_indicator(InstanceId d, const AssignmentFunction& f,
                         const WorkloadSnapshot& snap);
double balance_indicator(std::span<const Cost> loads, InstanceId d);
double max_balance_indicator(std::span<const Cost> loads);
// max_d (L(d) - mean) / mean; overload side only.
double overload_ratio(std::span<const Cost> loads);

/// Keys (sorted) whose destination differs between f and f2.
std::vector<KeyId> delta(const AssignmentFunction& f,
                         const AssignmentFunction& f2,
                         std::span<const KeyId> keys);
std::vector<KeyId> delta(const AssignmentFunction& f,
                         const AssignmentFunction& f2,
                         const WorkloadSnapshot& snap);

/// Sum of windowed memory over `keys`. Throws UnknownKey.
Memory migration_cost(std::span<const KeyId> keys, const WorkloadSnapshot& snap,
                      std::size_t w);

struct MigrationPlan {
  std::vector<KeyId> delta;
  RoutingTable new_table{1};
  Memory cost = 0;
};

}  // namespace rebalance

template <>
struct std::hash<rebalance::KeyId> {
  std::size_t operator()(rebalance::KeyId k) const noexcept {
    return std::hash<std::uint64_t>{}(k.value);
  }
};
