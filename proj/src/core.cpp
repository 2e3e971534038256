#include "rebalance/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rebalance/errors.hpp"

namespace rebalance {

namespace {

std::string key_str(KeyId k) { return std::to_string(k.value); }

}  // namespace

void TopologyConfig::validate() const {
  if (n_downstream < 1) throw ConfigError("instances", "must be >= 1");
  if (n_upstream < 1) throw ConfigError("upstream", "must be >= 1");
  if (window < 1) throw ConfigError("window", "must be >= 1");
  if (!(theta_max >= 0.0)) throw ConfigError("theta_max", "must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("beta", "must be >= 0");
  if (level_r < 0 || level_r > 30) {
    throw ConfigError("level_r", "must be in [0, 30]");
  }
}

Memory KeyIntervalStats::windowed_memory(std::size_t w) const {
  const std::size_t n = std::min(w, mem_history.size());
  return std::accumulate(mem_history.end() - static_cast<std::ptrdiff_t>(n),
                         mem_history.end(), Memory{0});
}

WorkloadSnapshot::WorkloadSnapshot(std::int64_t interval,
                                   std::vector<KeyIntervalStats> stats)
    : interval_(interval), stats_(std::move(stats)) {
  if (interval_ < 0) throw InvalidInput("interval must be >= 0");
  std::sort(stats_.begin(), stats_.end(),
            [](const auto& a, const auto& b) { return a.key < b.key; });
  for (std::size_t i = 0; i < stats_.size(); ++i) {
    const auto& s = stats_[i];
    if (i > 0 && stats_[i - 1].key == s.key) {
      throw InvalidInput("duplicate key " + key_str(s.key));
    }
    if (s.cost < 0 || s.frequency < 0) {
      throw InvalidInput("negative cost or frequency for key " +
                         key_str(s.key));
    }
    for (Memory m : s.mem_history) {
      if (m < 0) throw InvalidInput("negative memory for key " + key_str(s.key));
    }
  }
}

const KeyIntervalStats* WorkloadSnapshot::find(KeyId key) const {
  auto it = std::lower_bound(
      stats_.begin(), stats_.end(), key,
      [](const KeyIntervalStats& s, KeyId k) { return s.key < k; });
  if (it == stats_.end() || it->key != key) return nullptr;
  return &*it;
}

const KeyIntervalStats& WorkloadSnapshot::at(KeyId key) const {
  const auto* s = find(key);
  if (s == nullptr) throw UnknownKey("unknown key " + key_str(key));
  return *s;
}

std::size_t WorkloadSnapshot::index_of(KeyId key) const {
  return static_cast<std::size_t>(&at(key) - stats_.data());
}

std::vector<KeyId> WorkloadSnapshot::keys() const {
  std::vector<KeyId> out;
  out.reserve(stats_.size());
  for (const auto& s : stats_) out.push_back(s.key);
  return out;
}

Cost WorkloadSnapshot::total_cost() const {
  Cost total = 0;
  for (const auto& s : stats_) total += s.cost;
  return total;
}

Memory WorkloadSnapshot::total_memory(std::size_t w) const {
  Memory total = 0;
  for (const auto& s : stats_) total += s.windowed_memory(w);
  return total;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

InstanceId hash(KeyId key, std::size_t n_downstream) {
  if (n_downstream <= 1) return InstanceId{0};
  return InstanceId{static_cast<std::uint32_t>(mix64(key.value) % n_downstream)};
}

RoutingTable::RoutingTable(std::size_t n_downstream, std::size_t capacity)
    : n_downstream_(n_downstream), capacity_(capacity) {
  if (n_downstream_ < 1) throw InvalidInput("n_downstream must be >= 1");
}

bool RoutingTable::assign(KeyId key, InstanceId d) {
  if (d.index >= n_downstream_) {
    throw OutOfRange("instance " + std::to_string(d.index) + " out of range");
  }
  if (d == hash(key, n_downstream_)) {
    entries_.erase(key);
    return false;
  }
  entries_[key] = d;
  return true;
}

bool RoutingTable::erase(KeyId key) { return entries_.erase(key) > 0; }

std::optional<InstanceId> RoutingTable::lookup(KeyId key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

InstanceId AssignmentFunction::operator()(KeyId key) const {
  if (auto d = table_.lookup(key)) return *d;
  return hash(key, table_.n_downstream());
}

InstanceId evaluate(const AssignmentFunction& f, KeyId key) { return f(key); }

Cost load(InstanceId d, const AssignmentFunction& f,
          const WorkloadSnapshot& snap) {
  Cost total = 0;
  for (const auto& s : snap.stats()) {
    if (f(s.key) == d) total += s.cost;
  }
  return total;
}

std::vector<Cost> loads(const AssignmentFunction& f,
                        const WorkloadSnapshot& snap) {
  std::vector<Cost> out(f.n_downstream(), 0);
  for (const auto& s : snap.stats()) out[f(s.key).index] += s.cost;
  return out;
}

double mean_load(std::span<const Cost> loads) {
  if (loads.empty()) return 0.0;
  const double total =
      static_cast<double>(std::accumulate(loads.begin(), loads.end(), Cost{0}));
  return total / static_cast<double>(loads.size());
}

double balance_indicator(std::span<const Cost> loads, InstanceId d) {
  const double mean = mean_load(loads);
  if (mean <= 0.0) throw ZeroTotalLoad();
  return std::abs(static_cast<double>(loads[d.index]) - mean) / mean;
}

double balance_indicator(InstanceId d, const AssignmentFunction& f,
                         const WorkloadSnapshot& snap) {
  const auto l = loads(f, snap);
  return balance_indicator(l, d);
}

double max_balance_indicator(std::span<const Cost> loads) {
  const double mean = mean_load(loads);
  if (mean <= 0.0) throw ZeroTotalLoad();
  double worst = 0.0;
  for (Cost l : loads) {
    worst = std::max(worst, std::abs(static_cast<double>(l) - mean) / mean);
  }
  return worst;
}

double overload_ratio(std::span<const Cost> loads) {
  const double mean = mean_load(loads);
  if (mean <= 0.0) throw ZeroTotalLoad();
  const Cost top = *std::max_element(loads.begin(), loads.end());
  return (static_cast<double>(top) - mean) / mean;
}

std::vector<KeyId> delta(const AssignmentFunction& f,
                         const AssignmentFunction& f2,
                         std::span<const KeyId> keys) {
  if (f.n_downstream() != f2.n_downstream()) {
    throw InvalidInput("assignment functions disagree on n_downstream");
  }
  std::vector<KeyId> out;
  for (KeyId k : keys) {
    if (f(k) != f2(k)) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<KeyId> delta(const AssignmentFunction& f,
                         const AssignmentFunction& f2,
                         const WorkloadSnapshot& snap) {
  const auto keys = snap.keys();
  return delta(f, f2, keys);
}

Memory migration_cost(std::span<const KeyId> keys, const WorkloadSnapshot& snap,
                      std::size_t w) {
  Memory total = 0;
  for (KeyId k : keys) total += snap.at(k).windowed_memory(w);
  return total;
}

}  // namespace rebalance
