#include "rebalance/discretize.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <iterator>
#include <string>

#include "rebalance/errors.hpp"

namespace rebalance {

LevelSeries build_levels(std::int64_t x_max, int r) {
  if (x_max < 1) throw InvalidInput("x_max must be >= 1");
  if (r < 0 || r > 62) throw InvalidInput("r must be in [0, 62]");
  LevelSeries out;
  out.r = r;
  out.R = std::int64_t{1} << r;
  out.s = x_max / out.R;
  out.levels.reserve(static_cast<std::size_t>(out.s + r));
  for (std::int64_t j = out.s; j >= 1; --j) out.levels.push_back(j * out.R);
  for (int e = r - 1; e >= 0; --e) out.levels.push_back(std::int64_t{1} << e);
  return out;
}

Discretizer::Discretizer(LevelSeries series) : series_(std::move(series)) {
  if (series_.levels.empty()) throw InvalidInput("empty level series");
}

void Discretizer::reset() noexcept {
  delta_ = 0;
  last_ = 0;
}

std::int64_t Discretizer::map(std::int64_t x) {
  if (x < 1) throw InvalidInput("value " + std::to_string(x) + " below 1");
  if (last_ != 0 && x > last_) {
    throw InvalidInput("values must be non-increasing");
  }
  last_ = x;

  const auto& y = series_.levels;
  std::int64_t phi = y.front();
  if (x < y.front()) {
    // First level <= x; levels are descending.
    auto lo_it = std::lower_bound(y.begin(), y.end(), x, std::greater<>{});
    const std::int64_t lo = *lo_it;
    const std::int64_t hi = *std::prev(lo_it);
    phi = lo;
    // Over-represent only when that strictly shrinks a positive deviation.
    if (delta_ > 0 && std::llabs(delta_ + x - hi) < std::llabs(delta_ + x - lo)) {
      phi = hi;
    }
  }
  delta_ += x - phi;
  return phi;
}

std::vector<std::int64_t> discretize(std::span<const std::int64_t> values,
                                     Discretizer& disc) {
  std::vector<std::int64_t> out;
  out.reserve(values.size());
  for (std::int64_t x : values) out.push_back(disc.map(x));
  return out;
}

std::vector<std::int64_t> naive_piecewise(std::span<const std::int64_t> values,
                                          std::span<const PiecewiseBin> bins) {
  std::vector<std::int64_t> out;
  out.reserve(values.size());
  for (std::int64_t x : values) {
    auto it = std::find_if(bins.begin(), bins.end(), [x](const PiecewiseBin& b) {
      return b.lo <= x && x <= b.hi;
    });
    if (it == bins.end()) {
      throw OutOfRange("value " + std::to_string(x) + " not covered by any bin");
    }
    out.push_back(it->representative);
  }
  return out;
}

std::int64_t total_deviation(std::span<const std::int64_t> values,
                             std::span<const std::int64_t> mapped) {
  if (values.size() != mapped.size()) throw InvalidInput("length mismatch");
  std::int64_t d = 0;
  for (std::size_t i = 0; i < values.size(); ++i) d += values[i] - mapped[i];
  return d;
}

}  // namespace rebalance
