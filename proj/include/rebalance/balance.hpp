#pragma once

// Rebalancing algorithms for the mixed hash/routing-table assignment.
//
// Every algorithm follows the same three phases:
//   I   cleaning  - move some routing-table keys back to their hash instance,
//   II  preparing - disassociate keys from overloaded instances,
//   III assigning - place the disassociated keys with least-load fit
//                   decreasing (llfd), exchanging smaller keys when needed.
// MinTable cleans everything, MinMig cleans nothing, Mixed searches the number
// of keys to clean so that the new table fits the capacity.

#include <cstddef>
#include <span>
#include <vector>

#include "rebalance/core.hpp"

namespace rebalance {

enum class Criterion { HighestCost, LargestGamma, SmallestMemory };

struct SelectionCriterion {
  Criterion kind = Criterion::HighestCost;
  double beta = 1.0;  // only used by LargestGamma

  static SelectionCriterion highest_cost() { return {Criterion::HighestCost, 1.0}; }
  static SelectionCriterion largest_gamma(double beta) {
    return {Criterion::LargestGamma, beta};
  }
  static SelectionCriterion smallest_memory() {
    return {Criterion::SmallestMemory, 1.0};
  }
};

/// A key taking part in a balancing decision. `windowed_mem` is floored at 1.
struct CandidateKey {
  KeyId key;
  Cost cost = 0;
  Memory windowed_mem = 1;
  InstanceId origin;  // destination under the function being replaced
  InstanceId hashed;
};

/// Migration priority: cost^beta / windowed_mem.
double gamma(Cost cost, Memory windowed_mem, double beta);

/// Strict weak order "a is selected before b" under `psi`. Ties on the
/// criterion fall through to (cost desc, memory asc, origin, hashed, key).
bool selected_before(const CandidateKey& a, const CandidateKey& b,
                     const SelectionCriterion& psi);

/// (1 + theta_max) * mean, the per-instance load ceiling.
double load_limit(double mean, double theta_max);

/// load <= limit, with a relative slack of 1e-12 for the floating-point limit.
bool fits_limit(Cost load, double limit);

struct AdjustResult {
  enum class Kind { Accept, AcceptWithExchange, Reject };
  Kind kind = Kind::Reject;
  std::vector<KeyId> exchange;  // non-empty only for AcceptWithExchange
};

/// Decides whether `k` may be placed on `d` given the estimated loads and the
/// keys currently on `d`. Exchanged keys all cost strictly less than `k`.
AdjustResult adjust(const CandidateKey& k, InstanceId d,
                    std::span<const Cost> est_loads,
                    std::span<const CandidateKey> assigned, double limit,
                    const SelectionCriterion& psi);

struct BalanceOutcome {
  RoutingTable new_table;
  MigrationPlan plan;
  std::vector<Cost> loads;      // per-instance loads under the new function
  double achieved_theta = 0.0;  // max two-sided balance indicator
  double overload = 0.0;        // max one-sided overload ratio
  std::size_t back_moves_n = 0;
  std::size_t iterations = 0;   // Adjust invocations
  std::size_t fallback_placements = 0;
  bool capacity_infeasible = false;
  bool within_tolerance = true;  // overload <= theta_max
};

/// Phase III alone: `candidates` are disassociated from `base` and placed.
BalanceOutcome llfd(const AssignmentFunction& base, const WorkloadSnapshot& snap,
                    std::span<const KeyId> candidates, double theta_max,
                    const SelectionCriterion& psi, std::size_t w);

/// One full three-phase pass: move back `move_back_n` table keys chosen by
/// smallest windowed memory, then prepare and assign under `psi`.
BalanceOutcome three_phase(const AssignmentFunction& f,
                           const WorkloadSnapshot& snap, double theta_max,
                           std::size_t move_back_n,
                           const SelectionCriterion& psi, std::size_t w);

BalanceOutcome min_table(const AssignmentFunction& f,
                         const WorkloadSnapshot& snap, double theta_max,
                         std::size_t w);

BalanceOutcome min_mig(const AssignmentFunction& f, const WorkloadSnapshot& snap,
                       double theta_max, double beta, std::size_t w);

BalanceOutcome mixed(const AssignmentFunction& f, const WorkloadSnapshot& snap,
                     double theta_max, double beta, std::size_t w,
                     std::size_t table_capacity);

BalanceOutcome mixed_bf(const AssignmentFunction& f,
                        const WorkloadSnapshot& snap, double theta_max,
                        double beta, std::size_t w, std::size_t table_capacity);

struct SimpleResult {
  std::vector<InstanceId> owner;  // parallel to snap.stats()
  std::vector<Cost> loads;
};

/// Longest-processing-time greedy over all keys: descending cost, each onto
/// the currently least-loaded instance.
SimpleResult simple(const WorkloadSnapshot& snap, std::size_t n_downstream);

}  // namespace rebalance
