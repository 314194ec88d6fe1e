#pragma once

#include <cstddef>
#include <cstdint>

namespace brownout {

struct MD1Params {
  double lambda = 0.0;  // arrivals per second
  double tau = 1.0;     // fixed service time, seconds
};

struct SpeedupQuery {
  double alpha = 0.0;     // fraction of time spent in the optimized part
  double k_factor = 1.0;  // speedup of that part
};

/// Mean response time (waiting plus service) of an M/D/1 queue:
/// W = lambda tau^2 / (2 (1 - lambda tau)) + tau. Throws SaturationError when
/// lambda * tau >= 1.
double md1_response_time(const MD1Params& p);

/// Amdahl's law: 1 / ((1 - alpha) + alpha / K).
double amdahl_speedup(const SpeedupQuery& q);

/// Discrete-event single-server FIFO queue with Poisson arrivals and a fixed
/// service time; returns the mean response time over `arrivals` customers.
double simulate_md1(const MD1Params& p, std::size_t arrivals, std::uint64_t seed);

}  // namespace brownout
