#pragma once

// Half-linear-half-exponential (HLHE) value discretization.
//
// Levels for degree R = 2^r and maximum x_max are
//   s*R, (s-1)*R, ..., R, R/2, ..., 2, 1      with s = floor(x_max / R).
// Values are fed in non-increasing order; each one is mapped to one of the two
// levels bracketing it, steering the running deviation sum(x - phi(x))
// towards zero.

#include <cstdint>
#include <span>
#include <vector>

namespace rebalance {

struct LevelSeries {
  std::vector<std::int64_t> levels;  // strictly decreasing, ends at 1
  int r = 0;
  std::int64_t R = 1;
  std::int64_t s = 0;
};

/// Throws InvalidInput when x_max < 1 or r is outside [0, 62].
LevelSeries build_levels(std::int64_t x_max, int r);

class Discretizer {
 public:
  explicit Discretizer(LevelSeries series);

  /// Maps the next value of a non-increasing sequence of values >= 1.
  /// Throws InvalidInput on a sub-1 value or an increase.
  std::int64_t map(std::int64_t x);

  std::int64_t accumulated_deviation() const noexcept { return delta_; }
  const LevelSeries& series() const noexcept { return series_; }

  // Starts a new sequence (next interval).
  void reset() noexcept;

 private:
  LevelSeries series_;
  std::int64_t delta_ = 0;
  std::int64_t last_ = 0;  // 0 means "no value yet"
};

std::vector<std::int64_t> discretize(std::span<const std::int64_t> values,
                                     Discretizer& disc);

struct PiecewiseBin {
  std::int64_t lo = 0;  // inclusive
  std::int64_t hi = 0;  // inclusive
  std::int64_t representative = 0;
};

/// Stateless bin lookup. Throws OutOfRange for values outside every bin.
std::vector<std::int64_t> naive_piecewise(std::span<const std::int64_t> values,
                                          std::span<const PiecewiseBin> bins);

/// sum(values[i] - mapped[i]).
std::int64_t total_deviation(std::span<const std::int64_t> values,
                             std::span<const std::int64_t> mapped);

}  // namespace rebalance
