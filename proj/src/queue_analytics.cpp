#include "brownout/queue_analytics.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "brownout/error.hpp"

namespace brownout {

double md1_response_time(const MD1Params& p) {
  if (!(p.lambda >= 0.0)) throw ParameterError("lambda must be nonnegative");
  if (!(p.tau > 0.0)) throw ParameterError("tau must be positive");
  const double rho = p.lambda * p.tau;
  if (rho >= 1.0) {
    throw SaturationError("M/D/1 load lambda*tau = " + std::to_string(rho) +
                          " has no steady state");
  }
  return p.lambda * p.tau * p.tau / (2.0 * (1.0 - rho)) + p.tau;
}

double amdahl_speedup(const SpeedupQuery& q) {
  if (!(q.alpha >= 0.0 && q.alpha <= 1.0)) throw ParameterError("alpha must lie in [0, 1]");
  if (!(q.k_factor > 0.0)) throw ParameterError("speedup factor K must be positive");
  return 1.0 / ((1.0 - q.alpha) + q.alpha / q.k_factor);
}

double simulate_md1(const MD1Params& p, std::size_t arrivals, std::uint64_t seed) {
  if (!(p.lambda > 0.0)) throw ParameterError("simulation needs a positive arrival rate");
  if (!(p.tau > 0.0)) throw ParameterError("tau must be positive");
  if (arrivals == 0) throw ParameterError("simulation needs at least one arrival");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(p.lambda);
  double clock = 0.0;
  double server_free = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < arrivals; ++i) {
    clock += gap(rng);
    const double start = std::max(clock, server_free);
    server_free = start + p.tau;
    total += server_free - clock;
  }
  return total / static_cast<double>(arrivals);
}

}  // namespace brownout
