#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "brownout/brownout_router.hpp"
#include "brownout/error.hpp"

using namespace brownout;

namespace {

const std::vector<std::size_t> kCounts{2, 4, 1, 5, 2, 1, 2, 3};

BrownoutConfig config(std::size_t way, double threshold, bool full) {
  BrownoutConfig c;
  c.way = way;
  c.threshold = threshold;
  c.use_full_brownout = full;
  return c;
}

std::vector<std::size_t> s1_ids(const RoutingPlan& plan) {
  std::vector<std::size_t> ids;
  for (const auto& a : plan.s1) ids.push_back(a.expert_id);
  return ids;
}

std::vector<std::size_t> random_counts(std::mt19937_64& rng, std::size_t m, std::size_t max) {
  std::vector<std::size_t> c(m);
  for (auto& v : c) v = rng() % (max + 1);
  return c;
}

}  // namespace

TEST_CASE("partial brownout, k=4") {
  const auto plan = plan_brownout(kCounts, config(4, 0.6, false));
  CHECK(plan.coverage_target == doctest::Approx(12.0));
  CHECK(plan.total_tokens == 20);
  CHECK(s1_ids(plan) == std::vector<std::size_t>{3, 1, 7});
  REQUIRE(plan.s2_groups.size() == 2);
  CHECK(plan.s2_groups[0].executor == Executor{Executor::Kind::kUnited, 0});
  CHECK(plan.s2_groups[0].member_expert_ids == std::vector<std::size_t>{0, 2});
  CHECK(plan.s2_groups[0].token_count() == 3);
  CHECK(plan.s2_groups[1].executor == Executor{Executor::Kind::kUnited, 1});
  CHECK(plan.s2_groups[1].member_expert_ids == std::vector<std::size_t>{4, 5, 6});
  CHECK(plan.s2_groups[1].token_count() == 5);
  CHECK(plan.dropped.empty());

  const auto stats = plan_stats(plan, 8);
  CHECK(stats.experts_accessed == 5);
  CHECK(stats.tokens_via_originals == 12);
  CHECK(stats.tokens_via_united == 8);
  CHECK(stats.tokens_dropped == 0);
  CHECK(stats.access_fraction == 5.0 / 8.0);
}

TEST_CASE("full brownout drops the uncovered tokens") {
  const auto plan = plan_brownout(kCounts, config(4, 0.6, true));
  CHECK(s1_ids(plan) == std::vector<std::size_t>{3, 1, 7});
  CHECK(plan.s2_groups.empty());
  CHECK(plan.dropped_token_indices().size() == 8);
  const auto stats = plan_stats(plan, 8);
  CHECK(stats.experts_accessed == 3);
  CHECK(stats.tokens_via_originals == 12);
  CHECK(stats.tokens_dropped == 8);
  CHECK(stats.access_fraction == 0.375);
}

TEST_CASE("k=3: a group left with one member runs on its original") {
  const auto plan = plan_brownout(kCounts, config(3, 0.6, false));
  CHECK(s1_ids(plan) == std::vector<std::size_t>{3, 1, 7});
  REQUIRE(plan.s2_groups.size() == 3);
  CHECK(plan.s2_groups[0].member_expert_ids == std::vector<std::size_t>{0, 2});
  CHECK(plan.s2_groups[0].executor == Executor{Executor::Kind::kUnited, 0});
  CHECK(plan.s2_groups[1].member_expert_ids == std::vector<std::size_t>{4, 5});
  CHECK(plan.s2_groups[1].executor == Executor{Executor::Kind::kUnited, 1});
  CHECK(plan.s2_groups[2].member_expert_ids == std::vector<std::size_t>{6});
  CHECK(plan.s2_groups[2].executor == Executor{Executor::Kind::kOriginal, 6});
  const auto stats = plan_stats(plan, 8);
  CHECK(stats.experts_accessed == 6);
  CHECK(stats.tokens_via_originals == 14);
  CHECK(stats.tokens_via_united == 6);
  CHECK(plan.executor_for(6) == Executor{Executor::Kind::kOriginal, 6});
  CHECK(plan.executor_for(5) == Executor{Executor::Kind::kUnited, 1});
  CHECK(plan.executor_for(3) == Executor{Executor::Kind::kOriginal, 3});
}

TEST_CASE("threshold 1 keeps every active expert") {
  for (bool full : {false, true}) {
    const auto plan = plan_brownout(kCounts, config(4, 1.0, full));
    CHECK(plan.s1.size() == 8);
    CHECK(plan.s2_groups.empty());
    CHECK(plan.dropped.empty());
    const auto stats = plan_stats(plan, 8);
    CHECK(stats.experts_accessed == 8);
    CHECK(stats.tokens_dropped == 0);
  }
}

TEST_CASE("threshold 0 delegates every nonzero expert") {
  const std::vector<std::size_t> counts{0, 3, 2, 0, 1, 1};
  const auto plan = plan_brownout(counts, config(2, 0.0, false));
  CHECK(plan.s1.empty());
  std::set<std::size_t> members;
  for (const auto& g : plan.s2_groups) members.insert(g.member_expert_ids.begin(), g.member_expert_ids.end());
  CHECK(members == std::set<std::size_t>{1, 2, 4, 5});
  // {1} and {2} sit in different groups, so both run on their originals.
  CHECK(plan_stats(plan, 6).experts_accessed == 3);
  CHECK(plan_stats(plan, 6).tokens_via_united == 2);
}

TEST_CASE("zero-count experts are neither kept nor delegated") {
  const std::vector<std::size_t> counts{0, 0, 5, 0};
  const auto plan = plan_brownout(counts, config(2, 1.0, false));
  CHECK(s1_ids(plan) == std::vector<std::size_t>{2});
  CHECK(plan_stats(plan, 4).experts_accessed == 1);
  CHECK_FALSE(plan.executor_for(0).has_value());
}

TEST_CASE("minimal_cover_oracle examples") {
  CHECK(minimal_cover_oracle(kCounts, 12.0) == 3);
  CHECK(minimal_cover_oracle(kCounts, 0.0) == 0);
  CHECK(minimal_cover_oracle(kCounts, 20.0) == 8);
  const std::vector<std::size_t> sparse{0, 4, 0, 1};
  CHECK(minimal_cover_oracle(sparse, 5.0) == 2);
  CHECK_THROWS_AS(minimal_cover_oracle(std::vector<std::size_t>(21, 1), 3.0), ParameterError);
}

TEST_CASE("S1 is a minimal covering prefix") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t m = 1 + rng() % 12;
    const auto counts = random_counts(rng, m, 50);
    const double thr = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto plan = plan_brownout(counts, config(1 + rng() % m, thr, rng() % 2));
    const double T = plan.coverage_target;
    std::size_t covered = 0;
    for (const auto& a : plan.s1) covered += a.token_count;
    if (!plan.s1.empty() && T > 0) {
      CHECK(covered + 1e-9 >= T);
      CHECK(static_cast<double>(covered - plan.s1.back().token_count) < T);
    }
    for (std::size_t i = 1; i < plan.s1.size(); ++i) {
      CHECK(plan.s1[i - 1].token_count >= plan.s1[i].token_count);
    }
    CHECK(plan.s1.size() == minimal_cover_oracle(counts, T));
  }
}

TEST_CASE("plan invariants on random instances") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t m = 1 + rng() % 16;
    const std::size_t k = 1 + rng() % m;
    const bool full = rng() % 2;
    const auto counts = random_counts(rng, m, 20);
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    const double thr = static_cast<double>(rng() % 101) / 100.0;
    const auto plan = plan_brownout(counts, config(k, thr, full));
    const auto stats = plan_stats(plan, m);

    // Every synthetic token index shows up exactly once.
    std::vector<int> seen(total, 0);
    for (const auto& a : plan.s1) for (auto t : a.token_indices) ++seen[t];
    for (const auto& g : plan.s2_groups) for (auto t : g.merged_token_indices) ++seen[t];
    for (auto t : plan.dropped_token_indices()) ++seen[t];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    CHECK(stats.tokens_via_originals + stats.tokens_via_united + stats.tokens_dropped == total);
    CHECK(stats.experts_accessed <= m);
    if (!full) CHECK(stats.tokens_dropped == 0);
    if (full) CHECK(plan.s2_groups.empty());

    for (const auto& g : plan.s2_groups) {
      for (auto e : g.member_expert_ids) CHECK(e / k == g.group_id);
      const bool single = g.member_expert_ids.size() == 1;
      CHECK((g.executor.kind == Executor::Kind::kOriginal) == single);
    }
    CHECK(stats.experts_accessed == plan.s1.size() + plan.s2_groups.size());

    // Raising the threshold never moves tokens away from originals.
    const double higher = std::min(1.0, thr + 0.1);
    const auto plan_hi = plan_brownout(counts, config(k, higher, full));
    std::size_t orig_lo = 0, orig_hi = 0;
    for (const auto& a : plan.s1) orig_lo += a.token_count;
    for (const auto& a : plan_hi.s1) orig_hi += a.token_count;
    CHECK(orig_hi >= orig_lo);
  }
}

TEST_CASE("coverage slack keeps exact decimal targets exact") {
  // 25 * 0.28 is 7.000000000000001 in binary floating point.
  const std::vector<std::size_t> counts{4, 3, 3, 3, 3, 3, 3, 3};
  const auto plan = plan_brownout(counts, config(1, 0.28, false));
  CHECK(s1_ids(plan) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("ties in token count go to the lower expert id") {
  const std::vector<std::size_t> counts{3, 3, 3, 3};
  const auto plan = plan_brownout(counts, config(2, 0.5, false));
  CHECK(s1_ids(plan) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("invalid configuration") {
  CHECK_THROWS_AS(plan_brownout(kCounts, config(0, 0.5, false)), ParameterError);
  CHECK_THROWS_AS(plan_brownout(kCounts, config(9, 0.5, false)), ParameterError);
  CHECK_THROWS_AS(plan_brownout(kCounts, config(2, 1.5, false)), ParameterError);
  CHECK_THROWS_AS(plan_brownout(kCounts, config(2, -0.1, false)), ParameterError);

  std::vector<ExpertAssignment> bad{{0, 2, {0}}};
  CHECK_THROWS(plan_brownout(bad, 1, config(1, 1.0, false)));
  std::vector<ExpertAssignment> missing{{0, 1, {0}}};
  CHECK_THROWS(plan_brownout(missing, 2, config(1, 1.0, false)));
}

TEST_CASE("PlanStats accumulate") {
  PlanStats a{3, 10, 2, 1, 0.5};
  PlanStats b{1, 4, 0, 0, 0.25};
  a += b;
  CHECK(a.experts_accessed == 4);
  CHECK(a.tokens_via_originals == 14);
  CHECK(a.processed_tokens() == 16);
  CHECK(a.tokens_dropped == 1);
}
