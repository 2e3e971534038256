#pragma once

// Compact statistics: keys sharing (next, current, hashed, cost level, memory
// level) collapse into one record carrying a key count. The adapted Mixed
// algorithm runs over records instead of keys, and `expand` maps the result
// back to concrete keys.

#include <cstddef>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "rebalance/balance.hpp"
#include "rebalance/core.hpp"
#include "rebalance/discretize.hpp"

namespace rebalance {

struct CompactRecord {
  std::optional<InstanceId> next;  // nullopt: disassociated (candidate)
  InstanceId current;
  InstanceId hashed;
  Cost cost_level = 0;
  Memory mem_level = 0;
  std::size_t count = 0;

  auto shape() const {
    // nullopt orders before every instance.
    const std::int64_t n = next ? static_cast<std::int64_t>(next->index) : -1;
    return std::make_tuple(n, current, hashed, cost_level, mem_level);
  }
};

/// Records unique on their shape, kept sorted by shape.
class CompactSpace {
 public:
  CompactSpace() = default;
  // Merges duplicate shapes; throws InvalidInput on a zero count.
  explicit CompactSpace(std::vector<CompactRecord> records);

  void add(const CompactRecord& r);
  std::span<const CompactRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t key_count() const;

  friend bool operator==(const CompactSpace& a, const CompactSpace& b);

 private:
  std::vector<CompactRecord> records_;
};

struct KeyLevels {
  KeyId key;
  Cost cost_level = 0;
  Memory mem_level = 0;
};

struct Compression {
  CompactSpace space;
  std::vector<KeyLevels> levels;  // sorted by key
};

/// Discretizes costs and windowed memories (each in non-increasing order,
/// ties by key) and merges keys into records with next = current. Zero values
/// are kept as level 0.
Compression compress(const WorkloadSnapshot& snap, const AssignmentFunction& f,
                     Discretizer& disc_c, Discretizer& disc_s, std::size_t w);

/// Builds both discretizers from the snapshot maxima with degree 2^r.
Compression compress(const WorkloadSnapshot& snap, const AssignmentFunction& f,
                     int r, std::size_t w);

/// Per-instance sum of cost_level * count over records with next = d.
std::vector<Cost> weighted_loads(const CompactSpace& space,
                                 std::size_t n_downstream);

struct CompactOutcome {
  CompactSpace space;  // every record has next set
  std::vector<Cost> loads;
  std::size_t table_size = 0;
  std::size_t back_moves_n = 0;
  std::size_t iterations = 0;
  std::size_t fallback_placements = 0;
  bool capacity_infeasible = false;
  bool within_tolerance = true;
};

CompactOutcome compact_three_phase(const CompactSpace& space,
                                   std::size_t n_downstream, double theta_max,
                                   std::size_t move_back_n,
                                   const SelectionCriterion& psi);

CompactOutcome compact_min_table(const CompactSpace& space,
                                 std::size_t n_downstream, double theta_max);

CompactOutcome compact_mixed(const CompactSpace& space, std::size_t n_downstream,
                             double theta_max, double beta,
                             std::size_t table_capacity);

/// Picks concrete keys for every record with next != current and derives
/// the new routing table. Throws CountMismatch when a record asks for more
/// keys than match its (current, hashed, cost_level, mem_level).
MigrationPlan expand(const CompactOutcome& outcome, const Compression& levels,
                     const WorkloadSnapshot& snap, const AssignmentFunction& f,
                     const SelectionCriterion& psi, std::size_t w);

/// (N_D + 1) * N_D * N_D * |c| * |S|; the extra slot admits next = nil.
std::size_t space_bound(std::size_t n_downstream, std::size_t distinct_costs,
                        std::size_t distinct_mems);

}  // namespace rebalance
