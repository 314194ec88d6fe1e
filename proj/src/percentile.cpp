#include "brownout/percentile.hpp"

#include <algorithm>

#include "brownout/error.hpp"

namespace brownout {

std::optional<double> nearest_rank_percentile(std::vector<double> samples, int q) {
  if (q <= 0 || q > 100) throw ParameterError("percentile must lie in (0, 100]");
  if (samples.empty()) return std::nullopt;
  const std::size_t n = samples.size();
  // ceil(q * n / 100) in integer arithmetic
  std::size_t rank = (static_cast<std::size_t>(q) * n + 99) / 100;
  rank = std::max<std::size_t>(rank, 1);
  auto nth = samples.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(samples.begin(), nth, samples.end());
  return *nth;
}

}  // namespace brownout
