#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace mcir {

/// One logged epoch of a solver run. Quantities that were not requested
/// (no saddle point, no ground truth) are NaN.
struct ConvergenceRow {
  double epoch = 0.0;
  double dist_sq = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  double rmse_to_truth = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t fwd_calls = 0;
  std::uint64_t adj_calls = 0;

  friend bool operator==(const ConvergenceRow&, const ConvergenceRow&) = default;
};

using ConvergenceRecord = std::vector<ConvergenceRow>;

}  // namespace mcir
