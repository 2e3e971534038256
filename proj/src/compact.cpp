#include "rebalance/compact.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

#include "rebalance/errors.hpp"

namespace rebalance {

namespace {

constexpr std::int64_t kNil = -1;
constexpr std::size_t kIterationsPerKey = 64;

// A record's identity without its next instance.
struct Attrs {
  InstanceId current;
  InstanceId hashed;
  Cost vc = 0;
  Memory vs = 0;
  auto tie() const { return std::make_tuple(current, hashed, vc, vs); }
  friend bool operator<(const Attrs& a, const Attrs& b) { return a.tie() < b.tie(); }
};

using Shape = std::tuple<std::int64_t, InstanceId, InstanceId, Cost, Memory>;

Shape shape_of(std::int64_t next, const Attrs& a) {
  return {next, a.current, a.hashed, a.vc, a.vs};
}

Attrs attrs_of(const Shape& s) {
  return {std::get<1>(s), std::get<2>(s), std::get<3>(s), std::get<4>(s)};
}

CandidateKey as_candidate(const Attrs& a) {
  return CandidateKey{KeyId{0}, a.vc, std::max<Memory>(a.vs, 1), a.current,
                      a.hashed};
}

class CompactWorkspace {
 public:
  CompactWorkspace(const CompactSpace& space, std::size_t n, double theta_max)
      : n_(n), loads_(n, 0) {
    for (const auto& r : space.records()) {
      if (!r.next || *r.next != r.current) {
        throw InvalidInput("input records must have next == current");
      }
      if (r.current.index >= n || r.hashed.index >= n) {
        throw OutOfRange("record instance out of range");
      }
      add(r.current.index, {r.current, r.hashed, r.cost_level, r.mem_level},
          r.count);
      keys_ += r.count;
    }
    limit_ = load_limit(mean_load(loads_), theta_max);
    iteration_cap_ = kIterationsPerKey * std::max<std::size_t>(keys_, 1);
  }

  std::size_t movable() const {
    std::size_t total = 0;
    for (const auto& [s, c] : recs_) {
      const Attrs a = attrs_of(s);
      if (a.current != a.hashed) total += c;
    }
    return total;
  }

  std::size_t move_back(std::size_t n) {
    std::vector<Attrs> table;
    for (const auto& [s, c] : recs_) {
      const Attrs a = attrs_of(s);
      if (a.current != a.hashed) table.push_back(a);
    }
    sort_by(table, SelectionCriterion::smallest_memory());
    std::size_t moved = 0;
    for (const Attrs& a : table) {
      if (moved == n) break;
      const std::size_t take_n =
          std::min(n - moved, recs_.at(shape_of(a.current.index, a)));
      take(a.current.index, a, take_n);
      add(a.hashed.index, a, take_n);
      moved += take_n;
    }
    return moved;
  }

  void prepare(const SelectionCriterion& psi) {
    for (std::uint32_t d = 0; d < n_; ++d) {
      if (fits_limit(loads_[d], limit_)) continue;
      auto on_d = records_on(d);
      sort_by(on_d, psi);
      for (const Attrs& a : on_d) {
        while (!fits_limit(loads_[d], limit_) && count(d, a) > 0) {
          take(d, a, 1);
          add(kNil, a, 1);
        }
        if (fits_limit(loads_[d], limit_)) break;
      }
    }
  }

  void assign(const SelectionCriterion& psi) {
    const auto heaviest = SelectionCriterion::highest_cost();
    std::vector<std::uint32_t> order(n_);
    while (true) {
      // Pool head: best nil record under the descending-cost order.
      std::optional<Attrs> head;
      for (auto it = recs_.lower_bound(Shape{kNil, {}, {}, Cost{}, Memory{}});
           it != recs_.end() && std::get<0>(it->first) == kNil; ++it) {
        const Attrs a = attrs_of(it->first);
        if (!head ||
            selected_before(as_candidate(a), as_candidate(*head), heaviest)) {
          head = a;
        }
      }
      if (!head) break;
      const Attrs k = *head;
      take(kNil, k, 1);

      std::iota(order.begin(), order.end(), 0U);
      std::stable_sort(order.begin(), order.end(),
                       [this](std::uint32_t a, std::uint32_t b) {
                         return loads_[a] < loads_[b];
                       });
      bool placed = false;
      for (std::uint32_t d : order) {
        if (++iterations_ > iteration_cap_) {
          throw NonTermination("compact llfd exceeded " +
                               std::to_string(iteration_cap_) +
                               " Adjust invocations");
        }
        if (try_place(k, d, psi)) {
          placed = true;
          break;
        }
      }
      if (!placed) {
        add(order.front(), k, 1);
        ++fallbacks_;
      }
    }
  }

  CompactOutcome finish() const {
    CompactOutcome out;
    std::vector<CompactRecord> records;
    records.reserve(recs_.size());
    for (const auto& [s, c] : recs_) {
      const Attrs a = attrs_of(s);
      const auto next = std::get<0>(s);
      records.push_back(CompactRecord{
          InstanceId{static_cast<std::uint32_t>(next)}, a.current, a.hashed,
          a.vc, a.vs, c});
      if (static_cast<std::uint32_t>(next) != a.hashed.index) out.table_size += c;
    }
    out.space = CompactSpace(std::move(records));
    out.loads = loads_;
    out.iterations = iterations_;
    out.fallback_placements = fallbacks_;
    out.within_tolerance =
        std::all_of(loads_.begin(), loads_.end(),
                    [this](Cost l) { return fits_limit(l, limit_); });
    return out;
  }

 private:
  // Adjust over records: accept, accept with an exchange of cheaper units, or
  // reject. Mirrors the per-key rule unit by unit.
  bool try_place(const Attrs& k, std::uint32_t d, const SelectionCriterion& psi) {
    Cost remaining = loads_[d] + k.vc;
    if (!fits_limit(remaining, limit_)) {
      auto smaller = records_on(d);
      std::erase_if(smaller, [&](const Attrs& a) { return a.vc >= k.vc; });
      sort_by(smaller, psi);
      std::vector<std::pair<Attrs, std::size_t>> exchange;
      bool ok = false;
      for (const Attrs& a : smaller) {
        const std::size_t available = count(d, a);
        std::size_t used = 0;
        while (used < available && !ok) {
          remaining -= a.vc;
          ++used;
          ok = fits_limit(remaining, limit_);
        }
        exchange.emplace_back(a, used);
        if (ok) break;
      }
      if (!ok) return false;
      for (const auto& [a, units] : exchange) {
        take(d, a, units);
        add(kNil, a, units);
      }
    }
    add(d, k, 1);
    return true;
  }

  std::vector<Attrs> records_on(std::uint32_t d) const {
    std::vector<Attrs> out;
    const std::int64_t next = d;
    for (auto it = recs_.lower_bound(Shape{next, {}, {}, Cost{}, Memory{}});
         it != recs_.end() && std::get<0>(it->first) == next; ++it) {
      out.push_back(attrs_of(it->first));
    }
    return out;
  }

  void sort_by(std::vector<Attrs>& v, const SelectionCriterion& psi) const {
    std::stable_sort(v.begin(), v.end(), [&](const Attrs& a, const Attrs& b) {
      return selected_before(as_candidate(a), as_candidate(b), psi);
    });
  }

  std::size_t count(std::int64_t next, const Attrs& a) const {
    auto it = recs_.find(shape_of(next, a));
    return it == recs_.end() ? 0 : it->second;
  }

  void add(std::int64_t next, const Attrs& a, std::size_t c) {
    if (c == 0) return;
    recs_[shape_of(next, a)] += c;
    if (next != kNil) loads_[next] += a.vc * static_cast<Cost>(c);
  }

  void take(std::int64_t next, const Attrs& a, std::size_t c) {
    if (c == 0) return;
    auto it = recs_.find(shape_of(next, a));
    it->second -= c;
    if (it->second == 0) recs_.erase(it);
    if (next != kNil) loads_[next] -= a.vc * static_cast<Cost>(c);
  }

  std::size_t n_;
  std::map<Shape, std::size_t> recs_;
  std::vector<Cost> loads_;
  double limit_ = 0.0;
  std::size_t keys_ = 0;
  std::size_t iterations_ = 0;
  std::size_t iteration_cap_ = 0;
  std::size_t fallbacks_ = 0;
};

// Input order for discretization: non-increasing value, ties by key.
template <typename Value>
std::vector<std::size_t> descending(const std::vector<Value>& values,
                                    std::span<const KeyIntervalStats> stats) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return stats[a].key < stats[b].key;
  });
  return order;
}

template <typename Value>
std::vector<Value> discretize_all(const std::vector<Value>& values,
                                  std::span<const KeyIntervalStats> stats,
                                  Discretizer& disc) {
  std::vector<Value> out(values.size(), 0);
  for (std::size_t i : descending(values, stats)) {
    if (values[i] > 0) out[i] = disc.map(values[i]);
  }
  return out;
}

}  // namespace

CompactSpace::CompactSpace(std::vector<CompactRecord> records) {
  for (const auto& r : records) add(r);
}

void CompactSpace::add(const CompactRecord& r) {
  if (r.count == 0) throw InvalidInput("record count must be > 0");
  auto it = std::lower_bound(records_.begin(), records_.end(), r,
                             [](const CompactRecord& a, const CompactRecord& b) {
                               return a.shape() < b.shape();
                             });
  if (it != records_.end() && it->shape() == r.shape()) {
    it->count += r.count;
  } else {
    records_.insert(it, r);
  }
}

std::size_t CompactSpace::key_count() const {
  std::size_t total = 0;
  for (const auto& r : records_) total += r.count;
  return total;
}

bool operator==(const CompactSpace& a, const CompactSpace& b) {
  return std::equal(a.records_.begin(), a.records_.end(), b.records_.begin(),
                    b.records_.end(),
                    [](const CompactRecord& x, const CompactRecord& y) {
                      return x.shape() == y.shape() && x.count == y.count;
                    });
}

Compression compress(const WorkloadSnapshot& snap, const AssignmentFunction& f,
                     Discretizer& disc_c, Discretizer& disc_s, std::size_t w) {
  const auto stats = snap.stats();
  std::vector<Cost> costs;
  std::vector<Memory> mems;
  costs.reserve(stats.size());
  mems.reserve(stats.size());
  for (const auto& s : stats) {
    costs.push_back(s.cost);
    mems.push_back(s.windowed_memory(w));
  }
  const auto vc = discretize_all(costs, stats, disc_c);
  const auto vs = discretize_all(mems, stats, disc_s);

  Compression out;
  out.levels.reserve(stats.size());
  std::vector<CompactRecord> records;
  records.reserve(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const InstanceId d = f(stats[i].key);
    records.push_back(CompactRecord{d, d, hash(stats[i].key, f.n_downstream()),
                                    vc[i], vs[i], 1});
    out.levels.push_back(KeyLevels{stats[i].key, vc[i], vs[i]});
  }
  out.space = CompactSpace(std::move(records));
  return out;
}

Compression compress(const WorkloadSnapshot& snap, const AssignmentFunction& f,
                     int r, std::size_t w) {
  Cost max_c = 1;
  Memory max_s = 1;
  for (const auto& s : snap.stats()) {
    max_c = std::max(max_c, s.cost);
    max_s = std::max(max_s, s.windowed_memory(w));
  }
  Discretizer dc(build_levels(max_c, r));
  Discretizer ds(build_levels(max_s, r));
  return compress(snap, f, dc, ds, w);
}

std::vector<Cost> weighted_loads(const CompactSpace& space,
                                 std::size_t n_downstream) {
  std::vector<Cost> out(n_downstream, 0);
  for (const auto& r : space.records()) {
    if (r.next) out.at(r.next->index) += r.cost_level * static_cast<Cost>(r.count);
  }
  return out;
}

CompactOutcome compact_three_phase(const CompactSpace& space,
                                   std::size_t n_downstream, double theta_max,
                                   std::size_t move_back_n,
                                   const SelectionCriterion& psi) {
  CompactWorkspace ws(space, n_downstream, theta_max);
  const std::size_t moved = ws.move_back(move_back_n);
  ws.prepare(psi);
  ws.assign(psi);
  CompactOutcome out = ws.finish();
  out.back_moves_n = moved;
  return out;
}

CompactOutcome compact_min_table(const CompactSpace& space,
                                 std::size_t n_downstream, double theta_max) {
  return compact_three_phase(space, n_downstream, theta_max, space.key_count(),
                             SelectionCriterion::highest_cost());
}

CompactOutcome compact_mixed(const CompactSpace& space, std::size_t n_downstream,
                             double theta_max, double beta,
                             std::size_t table_capacity) {
  const auto psi = SelectionCriterion::largest_gamma(beta);
  const std::size_t movable =
      CompactWorkspace(space, n_downstream, theta_max).movable();
  std::size_t n = 0;
  while (true) {
    CompactOutcome out =
        compact_three_phase(space, n_downstream, theta_max, n, psi);
    if (out.table_size <= table_capacity) return out;
    if (n >= movable) {
      CompactOutcome fallback =
          compact_min_table(space, n_downstream, theta_max);
      fallback.capacity_infeasible = fallback.table_size > table_capacity;
      return fallback;
    }
    n = std::min(movable, n + (out.table_size - table_capacity));
  }
}

MigrationPlan expand(const CompactOutcome& outcome, const Compression& levels,
                     const WorkloadSnapshot& snap, const AssignmentFunction& f,
                     const SelectionCriterion& psi, std::size_t w) {
  struct Member {
    CandidateKey c;
    Memory raw_mem = 0;
  };
  const std::size_t n = f.n_downstream();
  std::map<Attrs, std::vector<Member>> groups;
  for (const auto& s : snap.stats()) {
    auto it = std::lower_bound(
        levels.levels.begin(), levels.levels.end(), s.key,
        [](const KeyLevels& l, KeyId k) { return l.key < k; });
    if (it == levels.levels.end() || it->key != s.key) {
      throw UnknownKey("no levels recorded for key " + std::to_string(s.key.value));
    }
    const InstanceId d = f(s.key);
    const InstanceId h = hash(s.key, n);
    const Memory raw = s.windowed_memory(w);
    groups[Attrs{d, h, it->cost_level, it->mem_level}].push_back(
        Member{CandidateKey{s.key, s.cost, std::max<Memory>(raw, 1), d, h}, raw});
  }
  for (auto& [a, members] : groups) {
    std::sort(members.begin(), members.end(), [&](const Member& x, const Member& y) {
      return selected_before(x.c, y.c, psi);
    });
  }

  std::map<Attrs, std::size_t> cursor;
  MigrationPlan plan{{}, f.table(), 0};
  for (const auto& r : outcome.space.records()) {
    if (!r.next) throw InvalidInput("outcome still holds a nil record");
    if (*r.next == r.current) continue;
    const Attrs a{r.current, r.hashed, r.cost_level, r.mem_level};
    auto g = groups.find(a);
    std::size_t& used = cursor[a];
    const std::size_t available = g == groups.end() ? 0 : g->second.size() - used;
    if (available < r.count) {
      throw CountMismatch("record asks for " + std::to_string(r.count) +
                          " keys, " + std::to_string(available) + " match");
    }
    for (std::size_t i = 0; i < r.count; ++i, ++used) {
      const Member& m = g->second[used];
      plan.delta.push_back(m.c.key);
      plan.cost += m.raw_mem;
      plan.new_table.assign(m.c.key, *r.next);
    }
  }
  std::sort(plan.delta.begin(), plan.delta.end());
  return plan;
}

std::size_t space_bound(std::size_t n_downstream, std::size_t distinct_costs,
                        std::size_t distinct_mems) {
  return (n_downstream + 1) * n_downstream * n_downstream * distinct_costs *
         distinct_mems;
}

}  // namespace rebalance
