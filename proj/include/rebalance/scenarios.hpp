#pragma once

// Small hand-checkable inputs shared by the golden checks, the tests and the
// CLI `golden` subcommand.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rebalance/core.hpp"

namespace rebalance {

/// First id >= `cursor` whose hash lands on `d`; advances `cursor` past it.
KeyId key_hashing_to(InstanceId d, std::size_t n_downstream, std::uint64_t& cursor);

/// Two instances, six keys, window 1 and memory equal to cost.
///   d0 holds k1:7, k2:4, k5:5 (L = 16); d1 holds k3:2, k4:1, k6:1 (L = 4).
/// k1..k3 hash to d0 and k4..k6 to d1, so the table is {k3 -> d1, k5 -> d0}.
struct TwoInstanceExample {
  std::array<KeyId, 6> k;  // k[0] is k1
  AssignmentFunction f{2};
  WorkloadSnapshot snap;
};

TwoInstanceExample two_instance_example();

/// The ten-value cost sequence used by the discretization examples.
std::vector<std::int64_t> ten_cost_sequence();

struct GoldenCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Runs every worked example and reports one line each.
std::vector<GoldenCheck> run_golden_checks();

}  // namespace rebalance
