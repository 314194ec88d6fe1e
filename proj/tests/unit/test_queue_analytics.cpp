#include <doctest.h>

#include "brownout/error.hpp"
#include "brownout/queue_analytics.hpp"

using namespace brownout;

TEST_CASE("md1_response_time examples") {
  CHECK(md1_response_time({0.0, 2.0}) == 2.0);
  CHECK(md1_response_time({0.5, 1.0}) == 1.5);
  CHECK_THROWS_AS(md1_response_time({1.0, 1.0}), SaturationError);
  CHECK_THROWS_AS(md1_response_time({2.0, 1.0}), SaturationError);
  CHECK_THROWS_AS(md1_response_time({-1.0, 1.0}), ParameterError);
  CHECK_THROWS_AS(md1_response_time({0.5, 0.0}), ParameterError);
}

TEST_CASE("response time grows without bound toward saturation") {
  const double tau = 0.5;
  double prev = md1_response_time({0.0, tau});
  for (int i = 1; i < 2000; ++i) {
    const double lambda = (i / 2000.0) / tau;
    const double w = md1_response_time({lambda, tau});
    CHECK(w > prev);
    prev = w;
  }
  CHECK(md1_response_time({(1 - 1e-9) / tau, tau}) > 1e7);
}

TEST_CASE("simulated M/D/1 agrees with the closed form") {
  for (double rho : {0.2, 0.5, 0.8}) {
    const MD1Params p{rho / 0.3, 0.3};
    const double sim = simulate_md1(p, 200000, 42);
    CHECK(sim == doctest::Approx(md1_response_time(p)).epsilon(0.05));
  }
  CHECK(simulate_md1({0.5, 1.0}, 1000, 1) == simulate_md1({0.5, 1.0}, 1000, 1));
}

TEST_CASE("amdahl_speedup") {
  CHECK(amdahl_speedup({0.6, 3.0}) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
  CHECK(amdahl_speedup({0.0, 7.0}) == 1.0);
  CHECK(amdahl_speedup({1.0, 4.0}) == 4.0);
  for (double alpha = 0.0; alpha < 1.0; alpha += 0.05) {
    for (double k : {1.5, 2.0, 10.0, 1000.0}) CHECK(amdahl_speedup({alpha, k}) < k);
  }
  CHECK_THROWS_AS(amdahl_speedup({1.2, 2.0}), ParameterError);
  CHECK_THROWS_AS(amdahl_speedup({0.5, 0.0}), ParameterError);
}
