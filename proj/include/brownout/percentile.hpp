#pragma once

#include <optional>
#include <vector>

namespace brownout {

/// Nearest-rank percentile: the ceil(q/100 * n)-th smallest sample (1-based).
/// Empty input gives nullopt. `q` is in (0, 100]. Takes the samples by value
/// because it sorts them.
std::optional<double> nearest_rank_percentile(std::vector<double> samples, int q);

}  // namespace brownout
