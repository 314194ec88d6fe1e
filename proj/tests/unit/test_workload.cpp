#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "brownout/error.hpp"
#include "brownout/workload.hpp"

using namespace brownout;

namespace {

RateSchedule burst_schedule() { return RateSchedule{{{0, 75, 1.0}, {75, 250, 2.0}}}; }

}  // namespace

TEST_CASE("burst schedule expected count") {
  const auto s = burst_schedule();
  CHECK(s.expected_count() == 425.0);
  const auto b = RateSchedule::burst(1.0, 75, 250);
  CHECK(b.expected_count() == 425.0);

  double total = 0;
  const auto len = LengthDistribution::constant(1);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    total += static_cast<double>(generate_trace(s, len, len, seed).size());
  }
  CHECK(total / 200 == doctest::Approx(425.0).epsilon(0.03));
}

TEST_CASE("zero rate gives an empty trace") {
  const RateSchedule s{{{0, 100, 0.0}}};
  const auto len = LengthDistribution::constant(3);
  CHECK(generate_trace(s, len, len, 1).empty());
  CHECK(generate_trace(RateSchedule{}, len, len, 1).empty());
}

TEST_CASE("same seed gives the same trace") {
  const auto in = LengthDistribution::alpaca_like_input();
  const auto out = LengthDistribution::alpaca_like_output();
  const auto a = generate_trace(burst_schedule(), in, out, 5);
  const auto b = generate_trace(burst_schedule(), in, out, 5);
  CHECK(a == b);
  CHECK(a != generate_trace(burst_schedule(), in, out, 6));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == i);
    if (i) CHECK(a[i - 1].arrival_time <= a[i].arrival_time);
  }
}

TEST_CASE("inter-arrival times pass a KS test against the exponential") {
  const double rate = 2.0;
  const RateSchedule s{{{0, 5200, rate}}};
  const auto len = LengthDistribution::constant(1);
  const auto trace = generate_trace(s, len, len, 2024);
  std::vector<double> gaps;
  double prev = 0;
  for (const auto& r : trace) {
    gaps.push_back(r.arrival_time - prev);
    prev = r.arrival_time;
  }
  gaps.resize(std::min<std::size_t>(gaps.size(), 10000));
  REQUIRE(gaps.size() == 10000);
  std::sort(gaps.begin(), gaps.end());
  const double n = static_cast<double>(gaps.size());
  double d = 0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double cdf = 1 - std::exp(-rate * gaps[i]);
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("lengths respect their bounds") {
  std::mt19937_64 rng(3);
  const auto dists = {LengthDistribution::sharegpt_like_input(), LengthDistribution::sharegpt_like_output(),
                      LengthDistribution::alpaca_like_input(), LengthDistribution::uniform(5, 9),
                      LengthDistribution::lognormal(1000, 2.0)};
  for (const auto& d : dists) {
    for (int i = 0; i < 5000; ++i) {
      const auto v = d.sample(rng, 300);
      CHECK(v >= 1);
      CHECK(v <= 300);
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const auto v = LengthDistribution::uniform(5, 9).sample(rng, 300);
    CHECK(v >= 5);
    CHECK(v <= 9);
  }
  const auto trace = generate_trace(RateSchedule{{{0, 200, 5.0}}}, LengthDistribution::lognormal(1500, 1.0),
                                    LengthDistribution::lognormal(1500, 1.0), 4, 2048);
  for (const auto& r : trace) CHECK(r.input_len + r.output_len <= 2048);
}

TEST_CASE("length profile medians") {
  std::mt19937_64 rng(8);
  auto median = [&](const LengthDistribution& d) {
    std::vector<std::size_t> v;
    for (int i = 0; i < 20001; ++i) v.push_back(d.sample(rng, 100000));
    std::nth_element(v.begin(), v.begin() + 10000, v.end());
    return static_cast<double>(v[10000]);
  };
  CHECK(median(LengthDistribution::alpaca_like_input()) == doctest::Approx(20).epsilon(0.1));
  CHECK(median(LengthDistribution::alpaca_like_output()) == doctest::Approx(60).epsilon(0.1));
  CHECK(median(LengthDistribution::sharegpt_like_input()) == doctest::Approx(86).epsilon(0.1));
  CHECK(median(LengthDistribution::sharegpt_like_output()) == doctest::Approx(822).epsilon(0.1));
}

TEST_CASE("empirical lengths from a file") {
  const auto dir = std::filesystem::path(BROWNOUT_TEST_TMP);
  std::filesystem::create_directories(dir);
  const auto path = (dir / "lengths.txt").string();
  {
    std::ofstream f(path);
    f << "# prompt lengths\n7\n\n9  # trailing comment\n";
  }
  const auto d = LengthDistribution::empirical_from_file(path);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto v = d.sample(rng, 2048);
    CHECK((v == 7 || v == 9));
  }
  CHECK_THROWS_AS(LengthDistribution::empirical_from_file((dir / "missing.txt").string()), IoError);
  {
    std::ofstream f(path);
    f << "7\nseven\n";
  }
  CHECK_THROWS_WITH_AS(LengthDistribution::empirical_from_file(path), doctest::Contains("line 2"), FormatError);
}

TEST_CASE("trace CSV round trip") {
  const auto trace = generate_trace(burst_schedule(), LengthDistribution::alpaca_like_input(),
                                    LengthDistribution::alpaca_like_output(), 9);
  std::stringstream ss;
  write_trace_csv(ss, trace);
  CHECK(read_trace_csv(ss) == trace);

  std::istringstream bad("id,arrival_time,input_len,output_len\n0,1.0,3,4\n1,0.5,3,4\n");
  CHECK_THROWS_WITH_AS(read_trace_csv(bad), doctest::Contains("line 3"), FormatError);
  std::istringstream short_row("id,arrival_time,input_len,output_len\n0,1.0,3\n");
  CHECK_THROWS_AS(read_trace_csv(short_row), FormatError);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS((RateSchedule{{{0, 10, 1}, {11, 20, 1}}}.validate()), ParameterError);
  CHECK_THROWS_AS((RateSchedule{{{5, 5, 1}}}.validate()), ParameterError);
  CHECK_THROWS_AS((RateSchedule{{{0, 5, -1}}}.validate()), ParameterError);
  CHECK_THROWS_AS(LengthDistribution::uniform(5, 4), ParameterError);
  CHECK_THROWS_AS(LengthDistribution::empirical({}), ParameterError);
}
