// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rebalance/balance.hpp"
#include "rebalance/compact.hpp"
#include "rebalance/discretize.hpp"
#include "rebalance/scenarios.hpp"
#include "rebalance/sim.hpp"
#include "rebalance/workload.hpp"

using namespace rebalance;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %2d %s [%s]\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string loads_str(const std::vector<Cost>& l) {
  std::string s = "(";
  for (std::size_t i = 0; i < l.size(); ++i) s += (i ? "," : "") + std::to_string(l[i]);
  return s + ")";
}

// ---------------------------------------------------------------------------

void two_instance_golden() {
  const auto ex = two_instance_example();
  const std::array<KeyId, 1> cand{ex.k[0]};
  const auto t0 = Clock::now();
  const auto l = llfd(ex.f, ex.snap, cand, 0.0, SelectionCriterion::highest_cost(), 1);
  const auto t = min_table(ex.f, ex.snap, 0.0, 1);
  const auto m = mixed(ex.f, ex.snap, 0.0, 1.5, 1, 2);
  const double ms = seconds_since(t0) * 1e3;
  const std::vector<Cost> even{10, 10};
  const bool ok = l.loads == even && l.new_table.size() == 4 && t.loads == even &&
                  t.new_table.size() == 2 && m.loads == even &&
                  m.new_table.size() <= 2 && !m.capacity_infeasible && ms < 1.0;
  report(1, "two-instance worked example", ok,
         "llfd " + loads_str(l.loads) + " table=" + std::to_string(l.new_table.size()) +
             "; min_table " + loads_str(t.loads) + " table=" +
             std::to_string(t.new_table.size()) + "; mixed " + loads_str(m.loads) +
             " table=" + std::to_string(m.new_table.size()) + "; " + fmt("%.3f ms", ms));
}

void level_golden() {
  const auto values = ten_cost_sequence();
  const auto series = build_levels(8, 2);
  Discretizer disc(series);
  std::vector<std::int64_t> mapped;
  for (auto v : values) mapped.push_back(disc.map(v));
  const std::vector<PiecewiseBin> bins{{1, 3, 2}, {4, 6, 5}, {7, 9, 8}};
  const auto naive = total_deviation(values, naive_piecewise(values, bins));
  const bool ok = series.levels == std::vector<std::int64_t>{8, 4, 2, 1} &&
                  mapped.at(2) == 4 && disc.accumulated_deviation() == 0 &&
                  total_deviation(values, mapped) == 0 && std::llabs(naive) == 3;
  report(2, "level discretization worked example", ok,
         "phi(3)=" + std::to_string(mapped.at(2)) +
             " deviation=" + std::to_string(disc.accumulated_deviation()) +
             " piecewise |deviation|=" + std::to_string(std::llabs(naive)));
}

// N equal buckets, each cut into at least two pieces: a perfect split exists
// and every piece is below the mean load.
struct Constructive {
  std::size_t n = 0;
  WorkloadSnapshot snap;
};

std::vector<Constructive> constructive_instances(std::size_t count) {
  std::mt19937_64 rng(20240601);
  std::vector<Constructive> out;
  std::uint64_t next_id = 1;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = 2 + rng() % 15;
    const Cost bucket = 20 + static_cast<Cost>(rng() % 200);
    std::vector<KeyIntervalStats> stats;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t pieces = 2 + rng() % 6;
      std::set<Cost> cuts;
      while (cuts.size() + 1 < pieces) cuts.insert(1 + static_cast<Cost>(rng() % (bucket - 1)));
      cuts.insert(bucket);
      Cost prev = 0;
      for (Cost c : cuts) {
        const Cost v = c - prev;
        prev = c;
        stats.push_back({KeyId{next_id++}, v, v, {v}});
      }
    }
    out.push_back({n, WorkloadSnapshot(0, std::move(stats))});
  }
  return out;
}

void llfd_bound(const std::vector<Constructive>& cases) {
  std::size_t bad = 0;
  double worst_frac = 0.0;
  const auto t0 = Clock::now();
  for (const auto& c : cases) {
    const auto keys = c.snap.keys();
    const auto out = llfd(AssignmentFunction(c.n), c.snap, keys, 0.0,
                          SelectionCriterion::highest_cost(), 1);
    const double bound = (1.0 - 1.0 / static_cast<double>(c.n)) / 3.0;
    if (out.overload > bound + 1e-9) ++bad;
    worst_frac = std::max(worst_frac, out.overload / bound);
  }
  const double secs = seconds_since(t0);
  report(3, "llfd overload bound on perfect-split instances", bad == 0 && secs < 10.0,
         std::to_string(bad) + "/" + std::to_string(cases.size()) +
             " over bound, worst overload " + fmt("%.3f", worst_frac) + " of bound, " +
             fmt("%.2f s", secs));
}

void mixed_vs_lpt(const std::vector<Constructive>& cases) {
  // Mixed asked to match the greedy result, starting from pure hashing.
  std::size_t bad = 0, over = 0, over_with_fallback = 0, zero_bad = 0;
  for (const auto& c : cases) {
    const double lpt = overload_ratio(simple(c.snap, c.n).loads);
    const AssignmentFunction f(c.n);
    const auto m = mixed(f, c.snap, lpt, 1.5, 1, c.snap.size());
    if (m.achieved_theta > lpt + 1e-9) ++bad;
    if (m.overload > lpt + 1e-9) {
      ++over;
      if (m.fallback_placements > 0) ++over_with_fallback;
    }
    const auto z = mixed(f, c.snap, 0.0, 1.5, 1, c.snap.size());
    if (z.achieved_theta > lpt + 1e-9) ++zero_bad;
  }
  report(4, "mixed balance no worse than greedy longest-first", bad == 0,
         std::to_string(bad) + "/" + std::to_string(cases.size()) +
             " worse (two-sided); overload worse on " + std::to_string(over) + " (" +
             std::to_string(over_with_fallback) + " with fallback placements); with theta_max=0: " +
             std::to_string(zero_bad) + " worse");
}

WorkloadSnapshot random_snapshot(std::mt19937_64& rng, std::size_t k, std::size_t w,
                                 Cost max_cost) {
  std::vector<KeyIntervalStats> stats;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < k; ++i) {
    const Cost c = static_cast<Cost>(std::pow(u(rng), 3.0) * static_cast<double>(max_cost));
    std::vector<Memory> hist;
    for (std::size_t j = 0; j < w; ++j) hist.push_back(static_cast<Memory>(rng() % (max_cost / 2 + 1)));
    stats.push_back({KeyId{rng()}, c, c, std::move(hist)});
  }
  return WorkloadSnapshot(0, std::move(stats));
}

AssignmentFunction random_function(std::mt19937_64& rng, const WorkloadSnapshot& snap,
                                   std::size_t n, unsigned percent) {
  AssignmentFunction f(n);
  for (const auto& s : snap.stats()) {
    if (rng() % 100 < percent) {
      f.table().assign(s.key, InstanceId{static_cast<std::uint32_t>(rng() % n)});
    }
  }
  return f;
}

void capacity_contract() {
  std::mt19937_64 rng(77);
  const double thetas[] = {0.0, 0.02, 0.08, 0.3};
  std::size_t runs = 0, over_cap = 0, both = 0, bf_worse = 0, infeasible = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    const std::size_t k = 4 + rng() % 40;
    const std::size_t n = 2 + rng() % 6;
    const std::size_t w = 1 + rng() % 3;
    const auto snap = random_snapshot(rng, k, w, 2 + static_cast<Cost>(rng() % 60));
    const auto f = random_function(rng, snap, n, 30);
    const std::size_t cap = rng() % (k + 1);
    const double theta = thetas[rng() % 4];
    const auto m = mixed(f, snap, theta, 1.5, w, cap);
    const auto bf = mixed_bf(f, snap, theta, 1.5, w, cap);
    ++runs;
    if (m.capacity_infeasible) {
      ++infeasible;
    } else if (m.new_table.size() > cap) {
      ++over_cap;
    }
    if (!m.capacity_infeasible && !bf.capacity_infeasible) {
      ++both;
      if (bf.plan.cost > m.plan.cost) ++bf_worse;
    }
  }
  report(5, "routing-table capacity contract", over_cap == 0 && bf_worse == 0 && runs >= 10000,
         std::to_string(runs) + " instances, " + std::to_string(over_cap) +
             " over capacity, " + std::to_string(infeasible) + " capacity-infeasible, " +
             "exhaustive search costlier on " + std::to_string(bf_worse) + "/" +
             std::to_string(both));
}

void compact_equivalence() {
  std::mt19937_64 rng(4242);
  const double thetas[] = {0.02, 0.08, 0.2};
  std::size_t mismatched = 0, total = 0;
  for (std::size_t i = 0; i < 120; ++i) {
    const std::size_t k = 100 + rng() % 1901;
    const std::size_t n = 2 + rng() % 15;
    const std::size_t w = 1 + rng() % 3;
    const auto snap = random_snapshot(rng, k, w, 20 + static_cast<Cost>(rng() % 200));
    const auto f = random_function(rng, snap, n, 15);
    const double theta = thetas[rng() % 3];
    const std::size_t cap = f.table().size() / 2 + rng() % (k / 2 + 1);
    const double beta = 1.5;

    const auto full = mixed(f, snap, theta, beta, w, cap);
    const auto levels = compress(snap, f, 0, w);
    const auto out = compact_mixed(levels.space, n, theta, beta, cap);
    const auto plan = expand(out, levels, snap, f, SelectionCriterion::largest_gamma(beta), w);
    const AssignmentFunction g(plan.new_table);
    ++total;
    if (loads(g, snap) != full.loads || plan.new_table.size() != full.new_table.size()) {
      ++mismatched;
    }
  }
  report(6, "compact planner matches full-key planner at exact levels", mismatched == 0,
         std::to_string(mismatched) + "/" + std::to_string(total) + " snapshots differ");
}

void estimation_error() {
  const std::size_t seeds = 10;
  const std::size_t n = 15;
  double worst_max = 0.0;
  std::string detail;
  for (int r = 0; r <= 8; ++r) {
    double max_err = 0.0, mean_err = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      GeneratorConfig gen;
      gen.seed = s;
      const auto snap = zipf_interval(gen, 0);
      const AssignmentFunction f(n);
      const auto est = weighted_loads(compress(snap, f, r, 1).space, n);
      const auto truth = loads(f, snap);
      double worst = 0.0, sum = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        const double e = std::abs(static_cast<double>(est[d] - truth[d])) /
                         static_cast<double>(truth[d]);
        worst = std::max(worst, e);
        sum += e;
      }
      max_err += worst / seeds;
      mean_err += sum / static_cast<double>(n) / seeds;
    }
    worst_max = std::max(worst_max, max_err);
    detail += " R=" + std::to_string(1 << r) + ":" + fmt("%.2f%%", 100 * max_err) + "/" +
              fmt("%.2f%%", 100 * mean_err);
  }
  report(7, "load estimation error of discretized statistics", worst_max <= 0.015,
         "worst-instance/mean-instance error per R, 10-seed average:" + detail);
}

void table_convergence() {
  TopologyConfig topo;
  GeneratorConfig gen;
  gen.key_count = 1000;
  SimOptions opts;
  opts.algorithm = Algorithm::MinMig;
  const double target = (static_cast<double>(topo.n_downstream) - 1.0) /
                        static_cast<double>(topo.n_downstream) * 1000.0;

  const auto t0 = Clock::now();
  const auto res = run(topo, gen, 200, opts);
  const double secs = seconds_since(t0);
  const std::size_t at200 = res.rows.back().table_size;
  const double rel = std::abs(static_cast<double>(at200) - target) / target;

  // Longer horizon, informational only.
  const auto longer = run(topo, gen, 1000, opts);
  report(8, "routing-table size under repeated migration", res.episodes == 200 && rel <= 0.10 && secs < 60.0,
         "after " + std::to_string(res.episodes) + " episodes table=" + std::to_string(at200) +
             " target " + fmt("%.1f", target) + " off by " + fmt("%.1f%%", 100 * rel) + ", " +
             fmt("%.1f s", secs) + "; after " + std::to_string(longer.episodes) +
             " episodes table=" + std::to_string(longer.rows.back().table_size));
}

double mean_cost(const SimResult& r) {
  double s = 0.0;
  for (const auto& row : r.rows) s += row.migration_cost_pct;
  return s / static_cast<double>(r.rows.size());
}

void cost_ordering() {
  const std::size_t seeds = 100, intervals = 50;
  double mig = 0, mix = 0, tab = 0;
  const auto t0 = Clock::now();
  for (std::size_t s = 0; s < seeds; ++s) {
    TopologyConfig topo;
    topo.seed = s;
    GeneratorConfig gen;
    gen.seed = s;
    SimOptions opts;
    opts.algorithm = Algorithm::MinMig;
    mig += mean_cost(run(topo, gen, intervals, opts)) / seeds;
    opts.algorithm = Algorithm::Mixed;
    mix += mean_cost(run(topo, gen, intervals, opts)) / seeds;
    opts.algorithm = Algorithm::MinTable;
    tab += mean_cost(run(topo, gen, intervals, opts)) / seeds;
  }
  const bool ok = mig <= mix + 1e-9 && mix <= tab && tab >= 2.0 * mix;
  report(9, "migration cost ordering across algorithms", ok,
         std::to_string(seeds) + " seeds x " + std::to_string(intervals) +
             " intervals: MinMig " + fmt("%.3f%%", mig) + ", Mixed " + fmt("%.3f%%", mix) +
             ", MinTable " + fmt("%.3f%%", tab) + ", ratio " + fmt("%.2f", tab / mix) + ", " +
             fmt("%.0f s", seconds_since(t0)));
}

void beta_trend() {
  const std::size_t seeds = 10, intervals = 50;
  std::vector<double> sizes;
  std::string detail;
  for (double beta : {1.0, 1.5, 2.0}) {
    double mean = 0.0, last = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      TopologyConfig topo;
      topo.beta = beta;
      topo.seed = s;
      GeneratorConfig gen;
      gen.seed = s;
      SimOptions opts;
      opts.algorithm = Algorithm::MinMig;
      const auto res = run(topo, gen, intervals, opts);
      double sum = 0.0;
      for (const auto& row : res.rows) sum += static_cast<double>(row.table_size);
      mean += sum / static_cast<double>(res.rows.size()) / seeds;
      last += static_cast<double>(res.rows.back().table_size) / seeds;
    }
    sizes.push_back(mean);
    detail += (detail.empty() ? "" : ", ") + fmt("beta=%.1f: ", beta) + fmt("mean %.1f", mean) +
              fmt(" final %.1f", last);
  }
  const bool ok = sizes[1] <= sizes[0] && sizes[2] <= sizes[1];
  report(10, "larger beta keeps the routing table smaller", ok, detail);
}

// Independent of the simulator's own counters.
class SafetyObserver : public SimObserver {
 public:
  std::size_t events = 0, paused_delta = 0, misdelivered = 0, ownership = 0,
              conservation = 0, episodes = 0;

  void on_event(const ProtocolEvent& e, const SystemState& s) override {
    ++events;
    std::map<KeyId, std::size_t> owners;
    Memory total = 0;
    for (const auto& d : s.downstream) {
      for (const auto& [k, m] : d.owned_states) {
        ++owners[k];
        total += m;
      }
    }
    const AssignmentFunction& expected =
        (e.step == Step::Migrate || e.step == Step::Ack) ? s.upstream.front().view : s.f;
    for (const auto& [k, c] : owners) {
      if (c != 1 || !s.downstream[expected(k).index].owned_states.contains(k)) ++ownership;
    }
    if (e.step == Step::Report) {
      at_report_ = total;
      keys_at_report_ = owners.size();
      ++episodes;
    }
    if (e.step == Step::Resume && (total != at_report_ || owners.size() != keys_at_report_)) {
      ++conservation;
    }
  }

  void on_delivery(const TupleStub& t, InstanceId d, const SystemState& s) override {
    if (s.paused && std::find(s.active_delta.begin(), s.active_delta.end(), t.key) !=
                        s.active_delta.end()) {
      ++paused_delta;
    }
    if (!s.downstream[d.index].owned_states.contains(t.key)) ++misdelivered;
  }

 private:
  Memory at_report_ = 0;
  std::size_t keys_at_report_ = 0;
};

void protocol_safety() {
  SafetyObserver obs;
  SimOptions opts;
  opts.observer = &obs;
  const auto res = run(TopologyConfig{}, GeneratorConfig{}, 50, opts);
  const bool ok = obs.episodes == res.episodes && obs.episodes > 0 && obs.paused_delta == 0 &&
                  obs.misdelivered == 0 && obs.ownership == 0 && obs.conservation == 0 &&
                  res.checks.clean();
  report(11, "migration protocol safety", ok,
         std::to_string(obs.episodes) + " episodes, " + std::to_string(obs.events) +
             " events, paused delta deliveries=" + std::to_string(obs.paused_delta) +
             " misdeliveries=" + std::to_string(obs.misdelivered) +
             " ownership violations=" + std::to_string(obs.ownership) +
             " conservation violations=" + std::to_string(obs.conservation) +
             " buffered=" + std::to_string(res.checks.buffered_tuples));
}

void bounded_deviation() {
  constexpr std::int64_t kMax = 16;
  constexpr std::size_t kLen = 8;
  std::size_t checked = 0, bad = 0;
  std::string detail;
  for (int r = 0; r <= 2; ++r) {
    const auto series = build_levels(kMax, r);
    std::int64_t worst = 0;
    std::vector<std::int64_t> seq;
    std::function<void(std::int64_t)> walk = [&](std::int64_t hi) {
      if (!seq.empty()) {
        Discretizer disc(series);
        const auto mapped = discretize(seq, disc);
        const std::int64_t dev = std::llabs(total_deviation(seq, mapped));
        worst = std::max(worst, dev);
        ++checked;
        if (dev > series.R) ++bad;
      }
      if (seq.size() == kLen) return;
      for (std::int64_t v = 1; v <= hi; ++v) {
        seq.push_back(v);
        walk(v);
        seq.pop_back();
      }
    };
    walk(kMax);
    detail += " r=" + std::to_string(r) + ": worst " + std::to_string(worst);
  }
  report(12, "bounded accumulated deviation", bad == 0,
         std::to_string(checked) + " sequences, " + std::to_string(bad) + " over R;" + detail);
}

}  // namespace

int main() {
  two_instance_golden();
  level_golden();
  const auto cases = constructive_instances(1000);
  llfd_bound(cases);
  mixed_vs_lpt(cases);
  capacity_contract();
  compact_equivalence();
  estimation_error();
  table_convergence();
  cost_ordering();
  beta_trend();
  protocol_safety();
  bounded_deviation();
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
