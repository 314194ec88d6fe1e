#pragma once

// Distillation of united experts: one student FFN per index group of k
// original experts, trained to match the teachers' outputs under a mean
// squared error objective.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "brownout/moe_core.hpp"

namespace brownout {

struct DistillConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 500;
  std::size_t batch_size = 64;  // >= token count means full-batch descent
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossPoint {
  std::size_t epoch = 0;
  double loss = 0.0;
};

struct DistillReport {
  std::size_t group_id = 0;
  std::vector<std::size_t> member_expert_ids;
  std::vector<LossPoint> loss_curve;  // epoch 0 is the loss at initialization
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double lower_bound = 0.0;
};

/// Gradient of group_loss with respect to the united expert's weights.
struct ExpertGradient {
  Matrix up;
  Matrix down;
};

/// Per-token mean over `tokens` of (1/k) * sum_i ||united(x) - original_i(x)||^2.
double group_loss(const ExpertFFN& united, std::span<const ExpertFFN> originals,
                  std::span<const HiddenVector> tokens);

/// Per-token mean of (1/k) * sum_i ||mean_j original_j(x) - original_i(x)||^2;
/// no single output can score below it.
double group_loss_lower_bound(std::span<const ExpertFFN> originals,
                              std::span<const HiddenVector> tokens);

/// Analytic gradient of group_loss (backpropagation through the two layers).
ExpertGradient group_loss_gradient(const ExpertFFN& united, std::span<const ExpertFFN> originals,
                                   std::span<const HiddenVector> tokens);

/// Trains a united expert for one group. Starts from a copy of the first
/// original. Throws TrainingError if the loss stops being finite.
std::pair<ExpertFFN, DistillReport> distill_group(std::span<const ExpertFFN> originals,
                                                  std::span<const HiddenVector> training_tokens,
                                                  const DistillConfig& cfg);

/// Index groups [0, k), [k, 2k), ...; the last group may be short.
std::vector<std::vector<std::size_t>> expert_groups(std::size_t m, std::size_t k);

/// Fills `layer.united_bank` by distilling every group (groups train in parallel).
std::pair<MoELayer, std::vector<DistillReport>> distill_layer(
    MoELayer layer, std::span<const HiddenVector> tokens, const DistillConfig& cfg);

/// Seeded standard-normal tokens for when no activation dump is available.
std::vector<HiddenVector> synthetic_tokens(std::size_t count, std::size_t d, std::uint64_t seed);

}  // namespace brownout
