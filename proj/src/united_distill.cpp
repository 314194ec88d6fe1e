#include "brownout/united_distill.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <random>
#include <string>

#include "brownout/error.hpp"

namespace brownout {

void DistillConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning_rate must be positive");
  }
  if (epochs == 0) throw ParameterError("epochs must be positive");
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
}

namespace {

void check_group(std::span<const ExpertFFN> originals, std::span<const HiddenVector> tokens) {
  if (originals.empty()) throw ParameterError("group has no original experts");
  if (tokens.empty()) throw ParameterError("distillation needs at least one token");
  for (const auto& e : originals) {
    e.validate();
    if (e.model_dim() != originals.front().model_dim()) {
      throw ShapeError("original experts in a group must share the model dimension");
    }
  }
}

double squared_distance(const HiddenVector& a, const HiddenVector& b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

// Pointwise mean of the teachers' outputs, one vector per token.
std::vector<HiddenVector> mean_targets(std::span<const ExpertFFN> originals,
                                       std::span<const HiddenVector> tokens) {
  std::vector<HiddenVector> mean(tokens.size(), HiddenVector(originals.front().model_dim(), 0.0));
  for (const auto& e : originals) {
    const auto out = expert_forward(e, tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      for (std::size_t j = 0; j < mean[t].size(); ++j) mean[t][j] += out[t][j];
    }
  }
  const double inv_k = 1.0 / static_cast<double>(originals.size());
  for (auto& v : mean) {
    for (double& x : v) x *= inv_k;
  }
  return mean;
}

// Excess term ||u(x) - mean(x)||^2 averaged over `subset`, plus its gradient.
// The full loss is this plus the constant lower bound.
double excess_loss_and_gradient(const ExpertFFN& united, std::span<const HiddenVector> tokens,
                                const std::vector<HiddenVector>& targets,
                                std::span<const std::size_t> subset, ExpertGradient* grad) {
  const std::size_t d = united.model_dim();
  const std::size_t hid = united.hidden_dim();
  if (grad) {
    grad->up = Matrix(hid, d);
    grad->down = Matrix(d, hid);
  }
  const double scale = 1.0 / static_cast<double>(subset.size());
  double loss = 0.0;
  std::vector<double> delta(d);
  std::vector<double> back(hid);
  for (std::size_t t : subset) {
    const HiddenVector& x = tokens[t];
    const std::vector<double> z = united.up.multiply(x);
    std::vector<double> a = z;
    if (united.activation == Activation::kRelu) {
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    }
    const std::vector<double> y = united.down.multiply(a);
    for (std::size_t j = 0; j < d; ++j) {
      delta[j] = y[j] - targets[t][j];
      loss += delta[j] * delta[j] * scale;
    }
    if (!grad) continue;
    // dL/dy = 2 * delta * scale
    for (std::size_t r = 0; r < d; ++r) {
      const double gy = 2.0 * scale * delta[r];
      for (std::size_t c = 0; c < hid; ++c) grad->down(r, c) += gy * a[c];
    }
    for (std::size_t c = 0; c < hid; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) acc += united.down(r, c) * 2.0 * scale * delta[r];
      const bool active = united.activation == Activation::kIdentity || z[c] > 0.0;
      back[c] = active ? acc : 0.0;
    }
    for (std::size_t r = 0; r < hid; ++r) {
      if (back[r] == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) grad->up(r, c) += back[r] * x[c];
    }
  }
  return loss;
}

}  // namespace

double group_loss(const ExpertFFN& united, std::span<const ExpertFFN> originals,
                  std::span<const HiddenVector> tokens) {
  check_group(originals, tokens);
  united.validate();
  const auto student = expert_forward(united, tokens);
  const double inv_k = 1.0 / static_cast<double>(originals.size());
  double total = 0.0;
  for (const auto& e : originals) {
    const auto teacher = expert_forward(e, tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      total += inv_k * squared_distance(student[t], teacher[t]);
    }
  }
  return total / static_cast<double>(tokens.size());
}

double group_loss_lower_bound(std::span<const ExpertFFN> originals,
                              std::span<const HiddenVector> tokens) {
  check_group(originals, tokens);
  const auto mean = mean_targets(originals, tokens);
  const double inv_k = 1.0 / static_cast<double>(originals.size());
  double total = 0.0;
  for (const auto& e : originals) {
    const auto teacher = expert_forward(e, tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      total += inv_k * squared_distance(mean[t], teacher[t]);
    }
  }
  return total / static_cast<double>(tokens.size());
}

ExpertGradient group_loss_gradient(const ExpertFFN& united, std::span<const ExpertFFN> originals,
                                   std::span<const HiddenVector> tokens) {
  check_group(originals, tokens);
  united.validate();
  const auto targets = mean_targets(originals, tokens);
  std::vector<std::size_t> all(tokens.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  ExpertGradient g;
  excess_loss_and_gradient(united, tokens, targets, all, &g);
  return g;
}

std::pair<ExpertFFN, DistillReport> distill_group(std::span<const ExpertFFN> originals,
                                                  std::span<const HiddenVector> training_tokens,
                                                  const DistillConfig& cfg) {
  cfg.validate();
  check_group(originals, training_tokens);

  const auto targets = mean_targets(originals, training_tokens);
  const double floor = group_loss_lower_bound(originals, training_tokens);
  const std::size_t n = training_tokens.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  ExpertFFN united = originals.front();
  DistillReport report;
  report.lower_bound = floor;
  auto full_loss = [&](const ExpertFFN& e) {
    return floor + excess_loss_and_gradient(e, training_tokens, targets, order, nullptr);
  };
  report.initial_loss = full_loss(united);
  report.loss_curve.push_back({0, report.initial_loss});

  std::mt19937_64 rng(cfg.seed);
  const std::size_t batch = std::min(cfg.batch_size, n);
  ExpertGradient grad;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      excess_loss_and_gradient(united, training_tokens, targets,
                               std::span<const std::size_t>(order).subspan(start, len), &grad);
      for (std::size_t i = 0; i < united.up.data().size(); ++i) {
        united.up.data()[i] -= cfg.learning_rate * grad.up.data()[i];
      }
      for (std::size_t i = 0; i < united.down.data().size(); ++i) {
        united.down.data()[i] -= cfg.learning_rate * grad.down.data()[i];
      }
    }
    const double loss = full_loss(united);
    if (!std::isfinite(loss)) {
      throw TrainingError("distillation diverged at epoch " + std::to_string(epoch) +
                          " (learning_rate " + std::to_string(cfg.learning_rate) +
                          ", initial loss " + std::to_string(report.initial_loss) + ")");
    }
    report.loss_curve.push_back({epoch, loss});
  }
  report.final_loss = report.loss_curve.back().loss;
  return {std::move(united), std::move(report)};
}

std::vector<std::vector<std::size_t>> expert_groups(std::size_t m, std::size_t k) {
  if (k < 1 || k > m) throw ParameterError("way k must lie in [1, m]");
  std::vector<std::vector<std::size_t>> groups((m + k - 1) / k);
  for (std::size_t i = 0; i < m; ++i) groups[i / k].push_back(i);
  return groups;
}

std::pair<MoELayer, std::vector<DistillReport>> distill_layer(
    MoELayer layer, std::span<const HiddenVector> tokens, const DistillConfig& cfg) {
  layer.validate();
  cfg.validate();
  const auto groups = expert_groups(layer.num_experts(), layer.group_way);

  std::vector<std::future<std::pair<ExpertFFN, DistillReport>>> jobs;
  jobs.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<ExpertFFN> members;
    for (std::size_t id : groups[g]) members.push_back(layer.routed_experts[id]);
    DistillConfig group_cfg = cfg;
    group_cfg.seed = cfg.seed + g;
    jobs.push_back(std::async(std::launch::async,
                              [members = std::move(members), tokens, group_cfg] {
                                return distill_group(members, tokens, group_cfg);
                              }));
  }

  layer.united_bank.clear();
  std::vector<DistillReport> reports;
  for (std::size_t g = 0; g < jobs.size(); ++g) {
    auto [united, report] = jobs[g].get();
    report.group_id = g;
    report.member_expert_ids = groups[g];
    layer.united_bank.push_back(std::move(united));
    reports.push_back(std::move(report));
  }
  return {std::move(layer), std::move(reports)};
}

std::vector<HiddenVector> synthetic_tokens(std::size_t count, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<HiddenVector> out(count, HiddenVector(d));
  for (auto& v : out) {
    for (double& x : v) x = normal(rng);
  }
  return out;
}

}  // namespace brownout
