#include "rebalance/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>
#include <tuple>

#include "rebalance/errors.hpp"

namespace rebalance {

namespace {

constexpr std::size_t kIterationsPerKey = 64;
constexpr std::size_t kUnplaced = static_cast<std::size_t>(-1);

// Tail of every ordering, shared by all criteria.
auto tie_tuple(const CandidateKey& k) {
  return std::make_tuple(-k.cost, k.windowed_mem, k.origin, k.hashed, k.key);
}

double achieved(std::span<const Cost> loads, bool overload_side) {
  if (mean_load(loads) <= 0.0) return 0.0;
  return overload_side ? overload_ratio(loads) : max_balance_indicator(loads);
}

// Mutable state of one balancing pass over the full key set.
class Workspace {
 public:
  Workspace(const AssignmentFunction& f, const WorkloadSnapshot& snap,
            double theta_max, std::size_t w)
      : f_(f),
        snap_(snap),
        theta_max_(theta_max),
        n_(f.n_downstream()),
        members_(n_),
        loads_(n_, 0) {
    const auto stats = snap.stats();
    slots_.reserve(stats.size());
    for (const auto& s : stats) {
      Slot slot;
      slot.c.key = s.key;
      slot.c.cost = s.cost;
      slot.raw_mem = s.windowed_memory(w);
      slot.c.windowed_mem = std::max<Memory>(slot.raw_mem, 1);
      slot.c.origin = f(s.key);
      slot.c.hashed = hash(s.key, n_);
      slots_.push_back(slot);
    }
    for (std::size_t i = 0; i < slots_.size(); ++i) place(i, slots_[i].c.origin);
    limit_ = load_limit(mean_load(loads_), theta_max_);
    iteration_cap_ = kIterationsPerKey * std::max<std::size_t>(slots_.size(), 1);
  }

  // Phase I: move back up to `n` table keys, smallest windowed memory first.
  std::size_t move_back(std::size_t n) {
    std::vector<std::size_t> in_table;
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (f_.table().contains(slots_[i].c.key)) in_table.push_back(i);
    }
    const auto eta = SelectionCriterion::smallest_memory();
    std::sort(in_table.begin(), in_table.end(), [&](std::size_t a, std::size_t b) {
      return selected_before(slots_[a].c, slots_[b].c, eta);
    });
    n = std::min(n, in_table.size());
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = in_table[j];
      unplace(i);
      place(i, slots_[i].c.hashed);
    }
    return n;
  }

  // Phase II: strip overloaded instances in psi order until they fit.
  void prepare(const SelectionCriterion& psi) {
    for (std::uint32_t d = 0; d < n_; ++d) {
      if (fits_limit(loads_[d], limit_)) continue;
      auto order = members_[d];
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return selected_before(slots_[a].c, slots_[b].c, psi);
      });
      for (std::size_t i : order) {
        if (fits_limit(loads_[d], limit_)) break;
        disassociate(i);
      }
    }
  }

  void disassociate(std::size_t i) {
    unplace(i);
    pending_.push_back(i);
  }

  // Phase III: least-load fit decreasing with Adjust.
  void assign(const SelectionCriterion& psi) {
    const auto heavier_first = [this](std::size_t a, std::size_t b) {
      // priority_queue pops the greatest element.
      return selected_before(slots_[b].c, slots_[a].c,
                             SelectionCriterion::highest_cost());
    };
    std::priority_queue<std::size_t, std::vector<std::size_t>,
                        decltype(heavier_first)>
        pool(heavier_first, std::move(pending_));
    pending_.clear();

    std::vector<std::uint32_t> order(n_);
    std::vector<CandidateKey> assigned;
    while (!pool.empty()) {
      const std::size_t i = pool.top();
      pool.pop();
      const CandidateKey& k = slots_[i].c;

      std::iota(order.begin(), order.end(), 0U);
      std::stable_sort(order.begin(), order.end(),
                       [this](std::uint32_t a, std::uint32_t b) {
                         return loads_[a] < loads_[b];
                       });

      bool placed = false;
      for (std::uint32_t d : order) {
        if (++iterations_ > iteration_cap_) {
          throw NonTermination("llfd exceeded " +
                               std::to_string(iteration_cap_) +
                               " Adjust invocations");
        }
        assigned.clear();
        for (std::size_t j : members_[d]) {
          if (slots_[j].c.cost < k.cost) assigned.push_back(slots_[j].c);
        }
        auto r = adjust(k, InstanceId{d}, loads_, assigned, limit_, psi);
        if (r.kind == AdjustResult::Kind::Reject) continue;
        for (KeyId e : r.exchange) {
          const std::size_t j = snap_.index_of(e);
          unplace(j);
          pool.push(j);
        }
        place(i, InstanceId{d});
        placed = true;
        break;
      }
      if (!placed) {
        // Nothing fits anywhere: settle for the least-loaded instance.
        place(i, InstanceId{order.front()});
        ++fallbacks_;
      }
    }
  }

  BalanceOutcome finish() const {
    RoutingTable table = f_.table();
    std::vector<KeyId> moved;
    Memory cost = 0;
    for (const auto& s : slots_) {
      const InstanceId d{static_cast<std::uint32_t>(s.place)};
      table.assign(s.c.key, d);
      if (d != s.c.origin) {
        moved.push_back(s.c.key);
        cost += s.raw_mem;
      }
    }
    BalanceOutcome out{.new_table = table,
                       .plan = MigrationPlan{std::move(moved), table, cost},
                       .loads = loads_};
    out.achieved_theta = achieved(loads_, false);
    out.overload = achieved(loads_, true);
    out.iterations = iterations_;
    out.fallback_placements = fallbacks_;
    out.within_tolerance =
        std::all_of(loads_.begin(), loads_.end(),
                    [this](Cost l) { return fits_limit(l, limit_); });
    return out;
  }

 private:
  struct Slot {
    CandidateKey c;
    Memory raw_mem = 0;
    std::size_t place = kUnplaced;
    std::size_t pos = 0;  // index inside members_[place]
  };

  void place(std::size_t i, InstanceId d) {
    Slot& s = slots_[i];
    s.place = d.index;
    s.pos = members_[d.index].size();
    members_[d.index].push_back(i);
    loads_[d.index] += s.c.cost;
  }

  void unplace(std::size_t i) {
    Slot& s = slots_[i];
    auto& m = members_[s.place];
    const std::size_t last = m.back();
    m[s.pos] = last;
    slots_[last].pos = s.pos;
    m.pop_back();
    loads_[s.place] -= s.c.cost;
    s.place = kUnplaced;
  }

  const AssignmentFunction& f_;
  const WorkloadSnapshot& snap_;
  double theta_max_;
  std::size_t n_;
  std::vector<Slot> slots_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<Cost> loads_;
  std::vector<std::size_t> pending_;
  double limit_ = 0.0;
  std::size_t iterations_ = 0;
  std::size_t iteration_cap_ = 0;
  std::size_t fallbacks_ = 0;
};

// Number of table entries that refer to keys present in the snapshot.
std::size_t movable_entries(const AssignmentFunction& f,
                            const WorkloadSnapshot& snap) {
  std::size_t n = 0;
  for (const auto& [key, d] : f.table().entries()) {
    if (snap.find(key) != nullptr) ++n;
  }
  return n;
}

BalanceOutcome capacity_fallback(const AssignmentFunction& f,
                                 const WorkloadSnapshot& snap, double theta_max,
                                 std::size_t w, std::size_t table_capacity) {
  BalanceOutcome out = min_table(f, snap, theta_max, w);
  out.capacity_infeasible = out.new_table.size() > table_capacity;
  out.new_table.set_capacity(table_capacity);
  out.plan.new_table.set_capacity(table_capacity);
  return out;
}

}  // namespace

double gamma(Cost cost, Memory windowed_mem, double beta) {
  return std::pow(static_cast<double>(cost), beta) /
         static_cast<double>(std::max<Memory>(windowed_mem, 1));
}

bool selected_before(const CandidateKey& a, const CandidateKey& b,
                     const SelectionCriterion& psi) {
  switch (psi.kind) {
    case Criterion::HighestCost:
      break;
    case Criterion::LargestGamma: {
      const double ga = gamma(a.cost, a.windowed_mem, psi.beta);
      const double gb = gamma(b.cost, b.windowed_mem, psi.beta);
      if (ga != gb) return ga > gb;
      break;
    }
    case Criterion::SmallestMemory:
      if (a.windowed_mem != b.windowed_mem) return a.windowed_mem < b.windowed_mem;
      if (a.cost != b.cost) return a.cost < b.cost;
      break;
  }
  return tie_tuple(a) < tie_tuple(b);
}

double load_limit(double mean, double theta_max) {
  return (1.0 + theta_max) * mean;
}

bool fits_limit(Cost load, double limit) {
  return static_cast<double>(load) <= limit + 1e-12 * std::max(1.0, limit);
}

AdjustResult adjust(const CandidateKey& k, InstanceId d,
                    std::span<const Cost> est_loads,
                    std::span<const CandidateKey> assigned, double limit,
                    const SelectionCriterion& psi) {
  const Cost with_k = est_loads[d.index] + k.cost;
  if (fits_limit(with_k, limit)) return {AdjustResult::Kind::Accept, {}};

  std::vector<CandidateKey> smaller;
  for (const auto& a : assigned) {
    if (a.cost < k.cost) smaller.push_back(a);
  }
  std::sort(smaller.begin(), smaller.end(),
            [&](const CandidateKey& a, const CandidateKey& b) {
              return selected_before(a, b, psi);
            });
  Cost remaining = with_k;
  AdjustResult r{AdjustResult::Kind::AcceptWithExchange, {}};
  for (const auto& a : smaller) {
    r.exchange.push_back(a.key);
    remaining -= a.cost;
    if (fits_limit(remaining, limit)) return r;
  }
  return {AdjustResult::Kind::Reject, {}};
}

BalanceOutcome llfd(const AssignmentFunction& base, const WorkloadSnapshot& snap,
                    std::span<const KeyId> candidates, double theta_max,
                    const SelectionCriterion& psi, std::size_t w) {
  Workspace ws(base, snap, theta_max, w);
  std::vector<KeyId> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (KeyId k : sorted) ws.disassociate(snap.index_of(k));
  ws.assign(psi);
  return ws.finish();
}

BalanceOutcome three_phase(const AssignmentFunction& f,
                           const WorkloadSnapshot& snap, double theta_max,
                           std::size_t move_back_n,
                           const SelectionCriterion& psi, std::size_t w) {
  Workspace ws(f, snap, theta_max, w);
  const std::size_t moved = ws.move_back(move_back_n);
  ws.prepare(psi);
  ws.assign(psi);
  BalanceOutcome out = ws.finish();
  out.back_moves_n = moved;
  return out;
}

BalanceOutcome min_table(const AssignmentFunction& f,
                         const WorkloadSnapshot& snap, double theta_max,
                         std::size_t w) {
  return three_phase(f, snap, theta_max, f.table().size(),
                     SelectionCriterion::highest_cost(), w);
}

BalanceOutcome min_mig(const AssignmentFunction& f, const WorkloadSnapshot& snap,
                       double theta_max, double beta, std::size_t w) {
  return three_phase(f, snap, theta_max, 0,
                     SelectionCriterion::largest_gamma(beta), w);
}

BalanceOutcome mixed(const AssignmentFunction& f, const WorkloadSnapshot& snap,
                     double theta_max, double beta, std::size_t w,
                     std::size_t table_capacity) {
  const auto psi = SelectionCriterion::largest_gamma(beta);
  const std::size_t movable = movable_entries(f, snap);
  std::size_t n = 0;
  while (true) {
    BalanceOutcome out = three_phase(f, snap, theta_max, n, psi, w);
    if (out.new_table.size() <= table_capacity) {
      out.new_table.set_capacity(table_capacity);
      out.plan.new_table.set_capacity(table_capacity);
      return out;
    }
    if (n >= movable) {
      return capacity_fallback(f, snap, theta_max, w, table_capacity);
    }
    n = std::min(movable, n + (out.new_table.size() - table_capacity));
  }
}

BalanceOutcome mixed_bf(const AssignmentFunction& f,
                        const WorkloadSnapshot& snap, double theta_max,
                        double beta, std::size_t w, std::size_t table_capacity) {
  const auto psi = SelectionCriterion::largest_gamma(beta);
  const std::size_t movable = movable_entries(f, snap);
  std::optional<BalanceOutcome> best;
  for (std::size_t n = 0; n <= movable; ++n) {
    BalanceOutcome out = three_phase(f, snap, theta_max, n, psi, w);
    if (out.new_table.size() > table_capacity) continue;
    // n ascends: the first of equal-cost outcomes has the smallest n.
    if (!best || out.plan.cost < best->plan.cost) best = std::move(out);
  }
  if (!best) return capacity_fallback(f, snap, theta_max, w, table_capacity);
  best->new_table.set_capacity(table_capacity);
  best->plan.new_table.set_capacity(table_capacity);
  return *std::move(best);
}

SimpleResult simple(const WorkloadSnapshot& snap, std::size_t n_downstream) {
  if (n_downstream < 1) throw InvalidInput("n_downstream must be >= 1");
  const auto stats = snap.stats();
  std::vector<std::size_t> order(stats.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (stats[a].cost != stats[b].cost) return stats[a].cost > stats[b].cost;
    return stats[a].key < stats[b].key;
  });
  SimpleResult r{std::vector<InstanceId>(stats.size()),
                 std::vector<Cost>(n_downstream, 0)};
  for (std::size_t i : order) {
    const auto d = static_cast<std::uint32_t>(
        std::min_element(r.loads.begin(), r.loads.end()) - r.loads.begin());
    r.owner[i] = InstanceId{d};
    r.loads[d] += stats[i].cost;
  }
  return r;
}

}  // namespace rebalance
