#pragma once

// Expert selection under brownout. Experts are ranked by how many tokens the
// gate sent them; the most loaded ones are kept as originals (S1) until they
// cover `threshold` of all routed tokens. The rest are either delegated to the
// united expert of their index group (partial brownout) or dropped (full).

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace brownout {

struct ExpertAssignment {
  std::size_t expert_id = 0;
  std::size_t token_count = 0;
  std::vector<std::size_t> token_indices;  // batch positions routed here
};

struct BrownoutConfig {
  std::size_t way = 1;  // k
  double threshold = 1.0;
  bool use_full_brownout = false;

  /// Throws ParameterError unless 0 <= threshold <= 1 and 1 <= way.
  void validate() const;
};

struct Executor {
  enum class Kind { kOriginal, kUnited };
  Kind kind = Kind::kUnited;
  std::size_t id = 0;  // expert id for kOriginal, group id for kUnited

  friend bool operator==(const Executor&, const Executor&) = default;
};

struct S2Group {
  std::size_t group_id = 0;
  Executor executor;
  std::vector<std::size_t> member_expert_ids;  // ascending
  std::vector<std::size_t> merged_token_indices;

  std::size_t token_count() const { return merged_token_indices.size(); }
};

struct DroppedExpert {
  std::size_t expert_id = 0;
  std::vector<std::size_t> token_indices;
};

struct RoutingPlan {
  std::vector<ExpertAssignment> s1;  // descending token count
  std::vector<S2Group> s2_groups;    // ascending group id
  std::vector<DroppedExpert> dropped;
  double coverage_target = 0.0;      // T = S * threshold
  std::size_t total_tokens = 0;      // S

  /// Executor responsible for a given original expert, or nullopt if the
  /// expert's tokens were dropped or it had none.
  std::optional<Executor> executor_for(std::size_t expert_id) const;

  std::vector<std::size_t> dropped_token_indices() const;
};

struct PlanStats {
  std::size_t experts_accessed = 0;
  std::size_t tokens_via_originals = 0;  // S1 plus single-member S2 groups
  std::size_t tokens_via_united = 0;
  std::size_t tokens_dropped = 0;
  double access_fraction = 0.0;

  std::size_t processed_tokens() const { return tokens_via_originals + tokens_via_united; }

  PlanStats& operator+=(const PlanStats& other);
};

/// Builds the S1 / S2 / dropped split for one MoE layer invocation.
/// `assignments` must hold exactly one entry per expert id in [0, m).
RoutingPlan plan_brownout(std::span<const ExpertAssignment> assignments, std::size_t m,
                          const BrownoutConfig& config);

/// Convenience overload: builds assignments from plain per-expert counts, with
/// synthetic token indices numbered consecutively by expert id.
RoutingPlan plan_brownout(std::span<const std::size_t> counts, const BrownoutConfig& config);

PlanStats plan_stats(const RoutingPlan& plan, std::size_t m);

/// Smallest number of experts whose counts sum to at least `target`, found by
/// exhaustive subset enumeration. Reference oracle, limited to 20 experts.
std::size_t minimal_cover_oracle(std::span<const std::size_t> counts, double target);

inline constexpr std::size_t kMaxOracleExperts = 20;

}  // namespace brownout
