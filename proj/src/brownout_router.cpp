#include "brownout/brownout_router.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "brownout/error.hpp"

namespace brownout {

namespace {

// Absorbs the rounding in S * threshold (20 * 0.6 must still mean 12 tokens).
constexpr double kCoverageSlack = 1e-9;

bool covers(double sum, double target) {
  return sum + kCoverageSlack * std::max(1.0, target) >= target;
}

}  // namespace

void BrownoutConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ParameterError("brownout threshold must lie in [0, 1]; got " + std::to_string(threshold));
  }
  if (way < 1) throw ParameterError("brownout way k must be at least 1");
}

std::optional<Executor> RoutingPlan::executor_for(std::size_t expert_id) const {
  for (const auto& a : s1) {
    if (a.expert_id == expert_id) return Executor{Executor::Kind::kOriginal, expert_id};
  }
  for (const auto& g : s2_groups) {
    if (std::find(g.member_expert_ids.begin(), g.member_expert_ids.end(), expert_id) !=
        g.member_expert_ids.end()) {
      return g.executor;
    }
  }
  return std::nullopt;
}

std::vector<std::size_t> RoutingPlan::dropped_token_indices() const {
  std::vector<std::size_t> out;
  for (const auto& d : dropped) out.insert(out.end(), d.token_indices.begin(), d.token_indices.end());
  return out;
}

PlanStats& PlanStats::operator+=(const PlanStats& other) {
  experts_accessed += other.experts_accessed;
  tokens_via_originals += other.tokens_via_originals;
  tokens_via_united += other.tokens_via_united;
  tokens_dropped += other.tokens_dropped;
  access_fraction += other.access_fraction;
  return *this;
}

RoutingPlan plan_brownout(std::span<const ExpertAssignment> assignments, std::size_t m,
                          const BrownoutConfig& config) {
  config.validate();
  if (m == 0) throw ParameterError("m must be positive");
  if (config.way > m) {
    throw ParameterError("way k=" + std::to_string(config.way) + " exceeds m=" + std::to_string(m));
  }
  if (assignments.size() != m) {
    throw ConsistencyError("expected one assignment per expert (" + std::to_string(m) +
                           "), got " + std::to_string(assignments.size()));
  }
  std::vector<bool> present(m, false);
  for (const auto& a : assignments) {
    if (a.expert_id >= m || present[a.expert_id]) {
      throw ConsistencyError("assignment expert ids must be a permutation of [0, m)");
    }
    if (a.token_count != a.token_indices.size()) {
      throw ConsistencyError("expert " + std::to_string(a.expert_id) +
                             " token_count disagrees with its token list");
    }
    present[a.expert_id] = true;
  }

  std::vector<const ExpertAssignment*> sorted;
  sorted.reserve(m);
  std::size_t total = 0;
  for (const auto& a : assignments) {
    sorted.push_back(&a);
    total += a.token_count;
  }
  std::sort(sorted.begin(), sorted.end(), [](const ExpertAssignment* a, const ExpertAssignment* b) {
    if (a->token_count != b->token_count) return a->token_count > b->token_count;
    return a->expert_id < b->expert_id;
  });

  RoutingPlan plan;
  plan.total_tokens = total;
  plan.coverage_target = static_cast<double>(total) * config.threshold;

  // Keep the shortest prefix of the load-sorted list that covers T.
  std::size_t covered = 0;
  std::vector<const ExpertAssignment*> rest;
  for (const ExpertAssignment* a : sorted) {
    if (a->token_count == 0) continue;
    if (!covers(static_cast<double>(covered), plan.coverage_target)) {
      plan.s1.push_back(*a);
      covered += a->token_count;
    } else {
      rest.push_back(a);
    }
  }

  if (config.use_full_brownout) {
    std::sort(rest.begin(), rest.end(),
              [](auto* a, auto* b) { return a->expert_id < b->expert_id; });
    for (const ExpertAssignment* a : rest) plan.dropped.push_back({a->expert_id, a->token_indices});
    return plan;
  }

  std::map<std::size_t, std::vector<const ExpertAssignment*>> groups;
  for (const ExpertAssignment* a : rest) groups[a->expert_id / config.way].push_back(a);
  for (auto& [gid, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](auto* a, auto* b) { return a->expert_id < b->expert_id; });
    S2Group g;
    g.group_id = gid;
    for (const ExpertAssignment* a : members) {
      g.member_expert_ids.push_back(a->expert_id);
      g.merged_token_indices.insert(g.merged_token_indices.end(), a->token_indices.begin(),
                                    a->token_indices.end());
    }
    // A lone delegated expert keeps serving its own tokens.
    g.executor = members.size() == 1 ? Executor{Executor::Kind::kOriginal, members.front()->expert_id}
                                     : Executor{Executor::Kind::kUnited, gid};
    plan.s2_groups.push_back(std::move(g));
  }
  return plan;
}

RoutingPlan plan_brownout(std::span<const std::size_t> counts, const BrownoutConfig& config) {
  std::vector<ExpertAssignment> assignments(counts.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    assignments[i].expert_id = i;
    assignments[i].token_count = counts[i];
    assignments[i].token_indices.resize(counts[i]);
    std::iota(assignments[i].token_indices.begin(), assignments[i].token_indices.end(), next);
    next += counts[i];
  }
  return plan_brownout(assignments, counts.size(), config);
}

PlanStats plan_stats(const RoutingPlan& plan, std::size_t m) {
  PlanStats s;
  s.experts_accessed = plan.s1.size() + plan.s2_groups.size();
  for (const auto& a : plan.s1) s.tokens_via_originals += a.token_count;
  for (const auto& g : plan.s2_groups) {
    if (g.executor.kind == Executor::Kind::kOriginal) {
      s.tokens_via_originals += g.token_count();
    } else {
      s.tokens_via_united += g.token_count();
    }
  }
  for (const auto& d : plan.dropped) s.tokens_dropped += d.token_indices.size();
  s.access_fraction = m == 0 ? 0.0 : static_cast<double>(s.experts_accessed) / static_cast<double>(m);
  return s;
}

std::size_t minimal_cover_oracle(std::span<const std::size_t> counts, double target) {
  const std::size_t m = counts.size();
  if (m > kMaxOracleExperts) {
    throw ParameterError("exhaustive cover oracle supports at most " +
                         std::to_string(kMaxOracleExperts) + " experts; got " + std::to_string(m));
  }
  if (target <= 0.0) return 0;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  const std::uint32_t limit = std::uint32_t{1} << m;
  for (std::uint32_t mask = 1; mask < limit; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    if (size >= best) continue;
    std::size_t sum = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (std::uint32_t{1} << i)) sum += counts[i];
    }
    if (covers(static_cast<double>(sum), target)) best = size;
  }
  if (best == std::numeric_limits<std::size_t>::max()) {
    throw ParameterError("no subset reaches the coverage target");
  }
  return best;
}

}  // namespace brownout
