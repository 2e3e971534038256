#include "rebalance/scenarios.hpp"

#include <cmath>
#include <string>

#include "rebalance/balance.hpp"
#include "rebalance/compact.hpp"
#include "rebalance/discretize.hpp"

namespace rebalance {

KeyId key_hashing_to(InstanceId d, std::size_t n_downstream, std::uint64_t& cursor) {
  while (hash(KeyId{cursor}, n_downstream) != d) ++cursor;
  return KeyId{cursor++};
}

TwoInstanceExample two_instance_example() {
  TwoInstanceExample ex;
  std::uint64_t cursor = 1;
  for (int i = 0; i < 3; ++i) ex.k[i] = key_hashing_to(InstanceId{0}, 2, cursor);
  for (int i = 3; i < 6; ++i) ex.k[i] = key_hashing_to(InstanceId{1}, 2, cursor);
  const std::array<Cost, 6> cost{7, 4, 2, 1, 5, 1};
  std::vector<KeyIntervalStats> stats;
  for (int i = 0; i < 6; ++i) {
    stats.push_back(KeyIntervalStats{ex.k[i], cost[i], cost[i], {cost[i]}});
  }
  ex.snap = WorkloadSnapshot(0, std::move(stats));
  ex.f.table().assign(ex.k[2], InstanceId{1});
  ex.f.table().assign(ex.k[4], InstanceId{0});
  return ex;
}

std::vector<std::int64_t> ten_cost_sequence() { return {8, 6, 3, 2, 2, 1, 1, 1, 1, 1}; }

namespace {

std::string loads_str(const std::vector<Cost>& l) {
  std::string s = "loads=(";
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(l[i]);
  }
  return s + ")";
}

GoldenCheck outcome_check(std::string name, const BalanceOutcome& out,
                          std::size_t table_size) {
  const bool pass = out.loads == std::vector<Cost>{10, 10} &&
                    out.new_table.size() == table_size;
  return {std::move(name), pass,
          loads_str(out.loads) + " table=" + std::to_string(out.new_table.size())};
}

}  // namespace

std::vector<GoldenCheck> run_golden_checks() {
  std::vector<GoldenCheck> out;
  const auto ex = two_instance_example();
  const auto& k = ex.k;

  {
    const auto l = loads(ex.f, ex.snap);
    const double b = balance_indicator(InstanceId{0}, ex.f, ex.snap);
    out.push_back({"initial loads and balance indicator",
                   l == std::vector<Cost>{16, 4} && std::abs(b - 0.6) < 1e-12,
                   loads_str(l) + " theta=" + std::to_string(b)});
  }
  {
    const std::array<KeyId, 1> cand{k[0]};
    out.push_back(outcome_check(
        "llfd from the existing table",
        llfd(ex.f, ex.snap, cand, 0.0, SelectionCriterion::highest_cost(), 1), 4));
  }
  out.push_back(outcome_check("min_table", min_table(ex.f, ex.snap, 0.0, 1), 2));
  out.push_back(outcome_check("mixed with capacity 2",
                              mixed(ex.f, ex.snap, 0.0, 1.5, 1, 2), 2));
  {
    // k1 onto d1 holding {k3:2, k4:1, k6:1}.
    const std::vector<Cost> est{9, 4};
    const std::vector<CandidateKey> on_d1{
        {k[2], 2, 2, InstanceId{1}, InstanceId{0}},
        {k[3], 1, 1, InstanceId{1}, InstanceId{1}},
        {k[5], 1, 1, InstanceId{1}, InstanceId{1}}};
    const CandidateKey k1{k[0], 7, 7, InstanceId{0}, InstanceId{0}};
    const auto r = adjust(k1, InstanceId{1}, est, on_d1, 10.0,
                          SelectionCriterion::highest_cost());
    out.push_back({"adjust exchanges k3 for k1",
                   r.kind == AdjustResult::Kind::AcceptWithExchange &&
                       r.exchange == std::vector<KeyId>{k[2]},
                   "exchange size " + std::to_string(r.exchange.size())});
  }
  {
    const std::vector<Cost> est{9, 10};
    const std::vector<CandidateKey> on_d0{
        {k[1], 4, 4, InstanceId{0}, InstanceId{0}},
        {k[4], 5, 5, InstanceId{0}, InstanceId{1}}};
    const CandidateKey k3{k[2], 2, 2, InstanceId{1}, InstanceId{0}};
    const auto r = adjust(k3, InstanceId{0}, est, on_d0, 10.0,
                          SelectionCriterion::highest_cost());
    out.push_back({"adjust rejects k3 on a full instance",
                   r.kind == AdjustResult::Kind::Reject, ""});
  }
  {
    const bool pass = gamma(7, 7, 1.0) == 1.0 && gamma(4, 4, 1.0) == 1.0 &&
                      gamma(7, 7, 0.5) < gamma(4, 4, 0.5);
    out.push_back({"migration priority index", pass, ""});
  }
  {
    const auto values = ten_cost_sequence();
    Discretizer disc(build_levels(8, 2));
    const auto mapped = discretize(values, disc);
    const bool pass = disc.series().levels == std::vector<std::int64_t>{8, 4, 2, 1} &&
                      mapped[2] == 4 && disc.accumulated_deviation() == 0;
    out.push_back({"level discretization of the ten-cost sequence", pass,
                   "phi(3)=" + std::to_string(mapped[2]) +
                       " deviation=" + std::to_string(disc.accumulated_deviation())});
  }
  {
    const auto values = ten_cost_sequence();
    const std::vector<PiecewiseBin> bins{{1, 3, 2}, {4, 6, 5}, {7, 9, 8}};
    const auto dev = total_deviation(values, naive_piecewise(values, bins));
    out.push_back({"piecewise constant discretization", std::llabs(dev) == 3,
                   "deviation=" + std::to_string(dev)});
  }
  {
    // (d', d, d^h, 4, 4, 2) as two keys sharing every attribute.
    CompactSpace space({{InstanceId{1}, InstanceId{1}, InstanceId{0}, 4, 4, 1},
                        {InstanceId{1}, InstanceId{1}, InstanceId{0}, 4, 4, 1}});
    out.push_back({"compact records merge", space.size() == 1 &&
                                                space.records()[0].count == 2,
                   ""});
  }
  return out;
}

}  // namespace rebalance
