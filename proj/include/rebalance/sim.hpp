#pragma once

// Discrete-event simulation of the controller workflow. Each rebalance
// episode runs the seven protocol steps in order:
//   Report, Plan, NotifyDownstream, PauseBroadcast, Migrate, Ack, Resume.
// Time is logical; only the Plan step is optionally timed on the host.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rebalance/core.hpp"
#include "rebalance/workload.hpp"

namespace rebalance {

enum class Step { Report, Plan, NotifyDownstream, PauseBroadcast, Migrate, Ack, Resume };

std::string_view step_name(Step s);

struct ProtocolEvent {
  std::size_t episode = 0;
  Step step = Step::Report;
  std::int64_t interval = 0;
  std::string detail;
};

struct TupleStub {
  KeyId key;
  std::uint64_t seq = 0;  // global arrival order
};

struct UpstreamState {
  InstanceId instance;
  AssignmentFunction view;
  std::set<KeyId> paused_keys;
  std::vector<TupleStub> cache;
};

struct DownstreamState {
  InstanceId instance;
  std::map<KeyId, Memory> owned_states;
  std::set<KeyId> outgoing;  // keys announced at NotifyDownstream
  bool acked = false;
};

struct SystemState {
  AssignmentFunction f;  // controller's current function
  std::vector<UpstreamState> upstream;
  std::vector<DownstreamState> downstream;
  std::size_t episodes = 0;
  std::uint64_t next_seq = 0;
  // Set between PauseBroadcast and Resume.
  bool paused = false;
  std::vector<KeyId> active_delta;

  SystemState(std::size_t n_upstream, std::size_t n_downstream,
              std::size_t table_capacity);
};

enum class Algorithm { MinTable, MinMig, Mixed, MixedBF, HashOnly };

std::string_view algorithm_name(Algorithm a);
// Throws ConfigError("algorithms", ...) on an unknown name.
Algorithm parse_algorithm(std::string_view name);

struct RoutingDecision {
  enum class Kind { Deliver, Buffer };
  Kind kind = Kind::Deliver;
  InstanceId target;  // meaningful for Deliver
};

/// Routing decision of upstream instance `upstream` for a tuple with `key`.
RoutingDecision deliver(KeyId key, const SystemState& state,
                        std::size_t upstream = 0);

/// Hooks for external invariant checks. Called after every event and every
/// tuple handed to a downstream instance.
class SimObserver {
 public:
  virtual ~SimObserver() = default;
  virtual void on_event(const ProtocolEvent&, const SystemState&) {}
  virtual void on_delivery(const TupleStub&, InstanceId, const SystemState&) {}
};

struct SimOptions {
  Algorithm algorithm = Algorithm::Mixed;
  bool compact_planner = true;  // Mixed only
  bool measure_plan_time = false;
  std::size_t arrivals_per_pause = 256;
  SimObserver* observer = nullptr;
};

/// Strictly greater than theta_max on the two-sided indicator.
bool trigger(const WorkloadSnapshot& snap, const AssignmentFunction& f,
             double theta_max);

/// Safety and bookkeeping counters accumulated by the simulator itself.
struct SimChecks {
  std::size_t paused_deliveries = 0;   // delta tuples delivered while paused
  std::size_t misroutes = 0;           // tuple reached a non-owner
  std::size_t ownership_violations = 0;
  std::size_t conservation_violations = 0;
  std::size_t cost_mismatches = 0;
  std::size_t flush_order_violations = 0;
  std::size_t buffered_tuples = 0;
  std::size_t capacity_infeasible = 0;
  std::size_t out_of_tolerance = 0;    // post-episode true overload > theta_max

  bool clean() const {
    return paused_deliveries == 0 && misroutes == 0 &&
           ownership_violations == 0 && conservation_violations == 0 &&
           cost_mismatches == 0 && flush_order_violations == 0;
  }
};

struct EpisodeResult {
  MigrationPlan plan;
  std::vector<ProtocolEvent> events;
  std::int64_t plan_micros = 0;
  bool capacity_infeasible = false;
};

/// Runs one episode over `snap` (already windowed). Updates `state` in place.
EpisodeResult rebalance_episode(SystemState& state, const WorkloadSnapshot& snap,
                                const TopologyConfig& topo,
                                const SimOptions& opts, SimChecks& checks);

struct TimelineRow {
  std::int64_t interval = 0;
  double max_load_ratio = 0.0;      // max L / mean after any rebalance
  double migration_cost_pct = 0.0;  // migrated memory / total memory * 100
  std::size_t table_size = 0;
  std::int64_t plan_micros = 0;
  bool rebalanced = false;
};

struct SimResult {
  std::vector<TimelineRow> rows;
  std::vector<ProtocolEvent> events;
  std::size_t episodes = 0;
  SimChecks checks;
};

/// Generates a Zipf workload, fluctuates it every interval and rebalances
/// whenever the trigger fires. Deterministic given the seeds.
SimResult run(const TopologyConfig& topo, const GeneratorConfig& gen,
              std::size_t n_intervals, const SimOptions& opts = {});

void write_events_ndjson(std::ostream& out, const std::vector<ProtocolEvent>& events);

inline constexpr std::string_view kMetricsHeader =
    "interval,max_load_ratio,migration_cost_pct,table_size,plan_micros,rebalanced";

std::string format_decimal(double v, int precision = 6);
void write_metrics_csv(std::ostream& out, const std::vector<TimelineRow>& rows);

}  // namespace rebalance
