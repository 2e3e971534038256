#include "rebalance/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <ostream>
#include <random>
#include <string>

#include <json.hpp>

#include "rebalance/balance.hpp"
#include "rebalance/compact.hpp"
#include "rebalance/errors.hpp"

namespace rebalance {

namespace {

struct PlanResult {
  MigrationPlan plan;
  bool capacity_infeasible = false;
};

PlanResult compute_plan(const AssignmentFunction& f, const WorkloadSnapshot& snap,
                        const TopologyConfig& topo, const SimOptions& opts) {
  const std::size_t w = topo.window;
  switch (opts.algorithm) {
    case Algorithm::MinTable: {
      auto out = min_table(f, snap, topo.theta_max, w);
      return {std::move(out.plan), false};
    }
    case Algorithm::MinMig: {
      auto out = min_mig(f, snap, topo.theta_max, topo.beta, w);
      return {std::move(out.plan), false};
    }
    case Algorithm::MixedBF: {
      auto out = mixed_bf(f, snap, topo.theta_max, topo.beta, w, topo.table_capacity);
      return {std::move(out.plan), out.capacity_infeasible};
    }
    case Algorithm::Mixed: {
      if (!opts.compact_planner) {
        auto out = mixed(f, snap, topo.theta_max, topo.beta, w, topo.table_capacity);
        return {std::move(out.plan), out.capacity_infeasible};
      }
      const Compression comp = compress(snap, f, topo.level_r, w);
      const CompactOutcome out = compact_mixed(comp.space, f.n_downstream(),
                                               topo.theta_max, topo.beta,
                                               topo.table_capacity);
      MigrationPlan plan = expand(out, comp, snap, f,
                                  SelectionCriterion::largest_gamma(topo.beta), w);
      plan.new_table.set_capacity(topo.table_capacity);
      const AssignmentFunction planned(plan.new_table);
      const auto planned_loads = loads(planned, snap);
      if (!fits_limit(*std::max_element(planned_loads.begin(), planned_loads.end()),
                      load_limit(mean_load(planned_loads), topo.theta_max))) {
        // Level rounding hid an overload; finish on exact costs.
        auto fix = mixed(planned, snap, topo.theta_max, topo.beta, w,
                         topo.table_capacity);
        MigrationPlan merged;
        merged.new_table = fix.new_table;
        merged.delta = delta(f, AssignmentFunction(fix.new_table), snap);
        merged.cost = migration_cost(merged.delta, snap, w);
        return {std::move(merged), out.capacity_infeasible || fix.capacity_infeasible};
      }
      return {std::move(plan), out.capacity_infeasible};
    }
    case Algorithm::HashOnly:
      break;
  }
  return {MigrationPlan{{}, f.table(), 0}, false};
}

class Episode {
 public:
  Episode(SystemState& state, const WorkloadSnapshot& snap,
          const TopologyConfig& topo, const SimOptions& opts, SimChecks& checks,
          EpisodeResult& res)
      : state_(state), snap_(snap), topo_(topo), opts_(opts), checks_(checks),
        res_(res), expected_(&state.f) {}

  void run() {
    id_ = ++state_.episodes;
    emit(Step::Report, "keys=" + std::to_string(snap_.size()) +
                           " total_cost=" + std::to_string(snap_.total_cost()));

    const auto t0 = std::chrono::steady_clock::now();
    PlanResult planned = compute_plan(state_.f, snap_, topo_, opts_);
    if (opts_.measure_plan_time) {
      res_.plan_micros = std::chrono::duration_cast<std::chrono::microseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    }
    res_.plan = std::move(planned.plan);
    res_.capacity_infeasible = planned.capacity_infeasible;
    if (planned.capacity_infeasible) ++checks_.capacity_infeasible;
    next_ = AssignmentFunction(res_.plan.new_table);
    if (overload_ratio(loads(*next_, snap_)) > topo_.theta_max + 1e-12) {
      ++checks_.out_of_tolerance;
    }
    emit(Step::Plan, "delta=" + std::to_string(res_.plan.delta.size()) +
                         " cost=" + std::to_string(res_.plan.cost) +
                         " table=" + std::to_string(res_.plan.new_table.size()));

    for (KeyId k : res_.plan.delta) {
      state_.downstream[state_.f(k).index].outgoing.insert(k);
    }
    emit(Step::NotifyDownstream, "keys=" + std::to_string(res_.plan.delta.size()));

    const std::set<KeyId> paused(res_.plan.delta.begin(), res_.plan.delta.end());
    for (auto& u : state_.upstream) {
      u.view = *next_;
      u.paused_keys = paused;
    }
    state_.paused = true;
    state_.active_delta = res_.plan.delta;
    emit(Step::PauseBroadcast, "paused=" + std::to_string(paused.size()));
    arrivals();

    migrate();
    expected_ = &*next_;
    emit(Step::Migrate, "moved=" + std::to_string(res_.plan.delta.size()) +
                            " memory=" + std::to_string(migrated_));

    for (auto& d : state_.downstream) d.acked = true;
    emit(Step::Ack, "acks=" + std::to_string(state_.downstream.size()));

    resume();
  }

 private:
  void emit(Step step, std::string detail) {
    ProtocolEvent e{id_, step, snap_.interval(), std::move(detail)};
    check_ownership();
    if (opts_.observer) opts_.observer->on_event(e, state_);
    res_.events.push_back(std::move(e));
  }

  void check_ownership() {
    std::vector<std::pair<KeyId, std::uint32_t>> held;
    held.reserve(snap_.size());
    for (const auto& d : state_.downstream) {
      for (const auto& [k, m] : d.owned_states) held.emplace_back(k, d.instance.index);
    }
    std::sort(held.begin(), held.end());
    auto it = held.begin();
    for (const auto& s : snap_.stats()) {
      while (it != held.end() && it->first < s.key) ++it;
      auto end = it;
      while (end != held.end() && end->first == s.key) ++end;
      if (end - it != 1 || it->second != (*expected_)(s.key).index) {
        ++checks_.ownership_violations;
      }
      it = end;
    }
  }

  // Tuples arriving while the pause is in effect: every delta key once plus a
  // random sample of all keys.
  void arrivals() {
    std::vector<KeyId> keys(res_.plan.delta.begin(), res_.plan.delta.end());
    std::mt19937_64 rng(mix64(topo_.seed ^ (id_ * 0x9e3779b97f4a7c15ULL)));
    std::uniform_int_distribution<std::size_t> pick(0, snap_.size() - 1);
    for (std::size_t i = 0; i < opts_.arrivals_per_pause; ++i) {
      keys.push_back(snap_.stats()[pick(rng)].key);
    }
    std::shuffle(keys.begin(), keys.end(), rng);
    for (KeyId k : keys) {
      const TupleStub t{k, state_.next_seq++};
      const std::size_t u = t.seq % state_.upstream.size();
      const RoutingDecision r = deliver(k, state_, u);
      if (r.kind == RoutingDecision::Kind::Buffer) {
        state_.upstream[u].cache.push_back(t);
        ++checks_.buffered_tuples;
      } else {
        hand_over(t, r.target);
      }
    }
  }

  void hand_over(const TupleStub& t, InstanceId d) {
    if (state_.paused && std::binary_search(state_.active_delta.begin(),
                                            state_.active_delta.end(), t.key)) {
      ++checks_.paused_deliveries;
    }
    if (!state_.downstream[d.index].owned_states.contains(t.key)) {
      ++checks_.misroutes;
    }
    if (opts_.observer) opts_.observer->on_delivery(t, d, state_);
  }

  void migrate() {
    Memory before = 0;
    for (const auto& d : state_.downstream) {
      for (const auto& [k, m] : d.owned_states) before += m;
    }
    for (KeyId k : res_.plan.delta) {
      auto& src = state_.downstream[state_.f(k).index];
      auto& dst = state_.downstream[(*next_)(k).index];
      auto node = src.owned_states.extract(k);
      if (node.empty()) {
        ++checks_.ownership_violations;
        continue;
      }
      migrated_ += node.mapped();
      dst.owned_states.insert(std::move(node));
    }
    Memory after = 0;
    for (const auto& d : state_.downstream) {
      for (const auto& [k, m] : d.owned_states) after += m;
    }
    if (before != after) ++checks_.conservation_violations;
    if (migrated_ != migration_cost(res_.plan.delta, snap_, topo_.window) ||
        migrated_ != res_.plan.cost) {
      ++checks_.cost_mismatches;
    }
  }

  void resume() {
    if (!std::all_of(state_.downstream.begin(), state_.downstream.end(),
                     [](const DownstreamState& d) { return d.acked; })) {
      throw Error("resume before every acknowledgement");
    }
    state_.f = *next_;
    state_.paused = false;
    state_.active_delta.clear();
    std::vector<TupleStub> flush;
    for (auto& u : state_.upstream) {
      if (!std::is_sorted(u.cache.begin(), u.cache.end(),
                          [](const TupleStub& a, const TupleStub& b) {
                            return a.seq < b.seq;
                          })) {
        ++checks_.flush_order_violations;
      }
      flush.insert(flush.end(), u.cache.begin(), u.cache.end());
      u.cache.clear();
      u.paused_keys.clear();
    }
    for (auto& d : state_.downstream) {
      d.outgoing.clear();
      d.acked = false;
    }
    emit(Step::Resume, "flushed=" + std::to_string(flush.size()));

    std::sort(flush.begin(), flush.end(),
              [](const TupleStub& a, const TupleStub& b) { return a.seq < b.seq; });
    for (const TupleStub& t : flush) {
      const RoutingDecision r = deliver(t.key, state_, t.seq % state_.upstream.size());
      hand_over(t, r.target);
    }
  }

  SystemState& state_;
  const WorkloadSnapshot& snap_;
  const TopologyConfig& topo_;
  const SimOptions& opts_;
  SimChecks& checks_;
  EpisodeResult& res_;
  std::size_t id_ = 0;
  std::optional<AssignmentFunction> next_;
  const AssignmentFunction* expected_;
  Memory migrated_ = 0;
};

}  // namespace

std::string_view step_name(Step s) {
  switch (s) {
    case Step::Report: return "Report";
    case Step::Plan: return "Plan";
    case Step::NotifyDownstream: return "NotifyDownstream";
    case Step::PauseBroadcast: return "PauseBroadcast";
    case Step::Migrate: return "Migrate";
    case Step::Ack: return "Ack";
    case Step::Resume: return "Resume";
  }
  return "?";
}

std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::MinTable: return "MinTable";
    case Algorithm::MinMig: return "MinMig";
    case Algorithm::Mixed: return "Mixed";
    case Algorithm::MixedBF: return "MixedBF";
    case Algorithm::HashOnly: return "HashOnly";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::MinTable, Algorithm::MinMig, Algorithm::Mixed,
                      Algorithm::MixedBF, Algorithm::HashOnly}) {
    if (algorithm_name(a) == name) return a;
  }
  throw ConfigError("algorithms", "unknown algorithm '" + std::string(name) + "'");
}

SystemState::SystemState(std::size_t n_upstream, std::size_t n_downstream,
                         std::size_t table_capacity)
    : f(n_downstream, table_capacity) {
  for (std::size_t u = 0; u < n_upstream; ++u) {
    upstream.push_back(UpstreamState{InstanceId{static_cast<std::uint32_t>(u)}, f, {}, {}});
  }
  for (std::size_t d = 0; d < n_downstream; ++d) {
    downstream.push_back(DownstreamState{InstanceId{static_cast<std::uint32_t>(d)}, {}, {}, false});
  }
}

RoutingDecision deliver(KeyId key, const SystemState& state, std::size_t upstream) {
  const UpstreamState& u = state.upstream.at(upstream);
  if (u.paused_keys.contains(key)) return {RoutingDecision::Kind::Buffer, {}};
  return {RoutingDecision::Kind::Deliver, u.view(key)};
}

bool trigger(const WorkloadSnapshot& snap, const AssignmentFunction& f,
             double theta_max) {
  const auto l = loads(f, snap);
  if (mean_load(l) <= 0.0) return false;
  return max_balance_indicator(l) > theta_max;
}

EpisodeResult rebalance_episode(SystemState& state, const WorkloadSnapshot& snap,
                                const TopologyConfig& topo,
                                const SimOptions& opts, SimChecks& checks) {
  EpisodeResult res;
  Episode(state, snap, topo, opts, checks, res).run();
  return res;
}

SimResult run(const TopologyConfig& topo, const GeneratorConfig& gen,
              std::size_t n_intervals, const SimOptions& opts) {
  topo.validate();
  gen.validate();
  if (n_intervals < 1) throw InvalidInput("n_intervals must be >= 1");

  SimResult result;
  SystemState state(topo.n_upstream, topo.n_downstream, topo.table_capacity);
  WorkloadSnapshot raw = zipf_interval(gen, 0);
  std::vector<std::deque<Memory>> history(raw.size());

  for (std::size_t i = 0; i < n_intervals; ++i) {
    if (i > 0) {
      raw = fluctuate(raw, gen.fluctuation, state.f,
                      mix64(gen.seed) + i, gen.target).snapshot;
    }
    // Windowed view: the last `window` per-interval memory values.
    std::vector<KeyIntervalStats> stats(raw.stats().begin(), raw.stats().end());
    for (std::size_t k = 0; k < stats.size(); ++k) {
      for (Memory m : stats[k].mem_history) history[k].push_back(m);
      while (history[k].size() > topo.window) history[k].pop_front();
      stats[k].mem_history.assign(history[k].begin(), history[k].end());
    }
    const WorkloadSnapshot snap(static_cast<std::int64_t>(i), std::move(stats));

    // Downstream state reflects this interval's windowed memory.
    for (auto& d : state.downstream) d.owned_states.clear();
    for (const auto& s : snap.stats()) {
      state.downstream[state.f(s.key).index].owned_states[s.key] =
          s.windowed_memory(topo.window);
    }

    TimelineRow row;
    row.interval = snap.interval();
    if (opts.algorithm != Algorithm::HashOnly &&
        trigger(snap, state.f, topo.theta_max)) {
      EpisodeResult ep = rebalance_episode(state, snap, topo, opts, result.checks);
      ++result.episodes;
      row.rebalanced = true;
      row.plan_micros = ep.plan_micros;
      const Memory total = snap.total_memory(topo.window);
      row.migration_cost_pct =
          total > 0 ? 100.0 * static_cast<double>(ep.plan.cost) /
                          static_cast<double>(total)
                    : 0.0;
      result.events.insert(result.events.end(), ep.events.begin(), ep.events.end());
    }
    const auto l = loads(state.f, snap);
    const double mean = mean_load(l);
    row.max_load_ratio =
        mean > 0.0 ? static_cast<double>(*std::max_element(l.begin(), l.end())) / mean
                   : 0.0;
    row.table_size = state.f.table().size();
    result.rows.push_back(row);
  }
  return result;
}

void write_events_ndjson(std::ostream& out, const std::vector<ProtocolEvent>& events) {
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["episode"] = e.episode;
    j["step"] = step_name(e.step);
    j["interval"] = e.interval;
    j["detail"] = e.detail;
    out << j.dump() << '\n';
  }
}

std::string format_decimal(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<TimelineRow>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.interval << ',' << format_decimal(r.max_load_ratio) << ','
        << format_decimal(r.migration_cost_pct) << ',' << r.table_size << ','
        << r.plan_micros << ',' << (r.rebalanced ? 1 : 0) << '\n';
  }
}

}  // namespace rebalance
