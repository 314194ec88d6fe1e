#include "brownout/moe_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "brownout/brownout_router.hpp"
#include "brownout/error.hpp"

namespace brownout {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " given " + std::to_string(data_.size()) + " values");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> Matrix::multiply(std::span<const double> x) const {
  if (x.size() != cols_) {
    throw ShapeError("matrix has " + std::to_string(cols_) + " columns, vector has " +
                     std::to_string(x.size()) + " entries");
  }
  std::vector<double> y(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* w = data_.data() + r * cols_;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  throw ParameterError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

void ExpertFFN::validate() const {
  const std::size_t d = up.cols();
  const std::size_t hid = up.rows();
  if (d == 0 || hid == 0) throw ShapeError("expert has empty weight matrix");
  if (down.rows() != d || down.cols() != hid) {
    throw ShapeError("expert down matrix is " + std::to_string(down.rows()) + "x" +
                     std::to_string(down.cols()) + ", expected " + std::to_string(d) + "x" +
                     std::to_string(hid));
  }
  auto finite = [](const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
  };
  if (!finite(up) || !finite(down)) throw ParameterError("expert weights must be finite");
}

std::size_t MoELayer::num_groups() const {
  return (num_experts() + group_way - 1) / group_way;
}

void MoELayer::validate(bool require_united) const {
  const std::size_t m = num_experts();
  if (m == 0) throw ParameterError("layer needs at least one routed expert");
  if (group_way < 1 || group_way > m) {
    throw ParameterError("way k must lie in [1, m]; got " + std::to_string(group_way));
  }
  if (gate.centroids.size() != m) {
    throw ShapeError("gate has " + std::to_string(gate.centroids.size()) + " centroids for " +
                     std::to_string(m) + " experts");
  }
  if (gate.top_k < 1 || gate.top_k > m) {
    throw ParameterError("top_k must lie in [1, m]; got " + std::to_string(gate.top_k));
  }
  for (const auto& c : gate.centroids) {
    if (c.size() != d) throw ShapeError("gate centroid dimension differs from d");
  }
  auto check = [&](const ExpertFFN& e) {
    e.validate();
    if (e.model_dim() != d || e.hidden_dim() != h) {
      throw ShapeError("expert shape differs from layer (d=" + std::to_string(d) +
                       ", h=" + std::to_string(h) + ")");
    }
  };
  for (const auto& e : routed_experts) check(e);
  for (const auto& e : shared_experts) check(e);
  for (const auto& e : united_bank) check(e);
  if (!united_bank.empty() && united_bank.size() != num_groups()) {
    throw ShapeError("united bank holds " + std::to_string(united_bank.size()) +
                     " experts, expected ceil(m/k) = " + std::to_string(num_groups()));
  }
  if (require_united && united_bank.size() != num_groups()) {
    throw ConsistencyError("layer has no distilled united experts");
  }
}

std::vector<double> gate_scores(std::span<const double> x, const GateUnit& gate) {
  std::vector<double> scores;
  scores.reserve(gate.centroids.size());
  for (const auto& c : gate.centroids) {
    if (c.size() != x.size()) {
      throw ShapeError("token dimension " + std::to_string(x.size()) +
                       " differs from centroid dimension " + std::to_string(c.size()));
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += x[j] * c[j];
    scores.push_back(acc);
  }
  return scores;
}

GateResult top_k_gate(std::span<const double> scores, std::size_t top_k) {
  const std::size_t m = scores.size();
  if (top_k < 1 || top_k > m) {
    throw ParameterError("top_k must lie in [1, " + std::to_string(m) + "]; got " +
                         std::to_string(top_k));
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(top_k);
  std::sort(order.begin(), order.end());

  // Shift by the max selected score before exponentiating.
  double peak = scores[order.front()];
  for (std::size_t i : order) peak = std::max(peak, scores[i]);
  std::vector<double> w(top_k);
  double denom = 0.0;
  for (std::size_t j = 0; j < top_k; ++j) {
    w[j] = std::exp(scores[order[j]] - peak);
    denom += w[j];
  }
  for (double& v : w) v /= denom;
  return {std::move(order), std::move(w)};
}

std::vector<double> gate_weights(std::span<const double> scores, std::size_t top_k) {
  GateResult g = top_k_gate(scores, top_k);
  std::vector<double> dense(scores.size(), 0.0);
  for (std::size_t j = 0; j < g.experts.size(); ++j) dense[g.experts[j]] = g.weights[j];
  return dense;
}

std::vector<HiddenVector> expert_forward(const ExpertFFN& expert,
                                         std::span<const HiddenVector> tokens) {
  std::vector<HiddenVector> out;
  out.reserve(tokens.size());
  for (const auto& x : tokens) {
    std::vector<double> z = expert.up.multiply(x);
    if (expert.activation == Activation::kRelu) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    out.push_back(expert.down.multiply(z));
  }
  return out;
}

TokenBatch route_tokens(const MoELayer& layer, std::vector<HiddenVector> tokens) {
  TokenBatch batch;
  batch.gates.reserve(tokens.size());
  for (const auto& x : tokens) {
    batch.gates.push_back(top_k_gate(gate_scores(x, layer.gate), layer.gate.top_k));
  }
  batch.tokens = std::move(tokens);
  return batch;
}

std::vector<ExpertAssignment> assignments_from_batch(const TokenBatch& batch,
                                                     std::size_t num_experts) {
  std::vector<ExpertAssignment> out(num_experts);
  for (std::size_t i = 0; i < num_experts; ++i) out[i].expert_id = i;
  for (std::size_t t = 0; t < batch.gates.size(); ++t) {
    for (std::size_t e : batch.gates[t].experts) {
      if (e >= num_experts) throw ConsistencyError("gate selected unknown expert");
      out[e].token_indices.push_back(t);
    }
  }
  for (auto& a : out) a.token_count = a.token_indices.size();
  return out;
}

namespace {

// Every (token, expert) pair of the batch must be accounted for exactly once.
void check_plan_matches(const RoutingPlan& plan, const std::vector<ExpertAssignment>& expected,
                        std::size_t m) {
  std::vector<int> seen(m, 0);
  std::size_t total = 0;
  auto claim = [&](std::size_t id, const std::vector<std::size_t>& tokens) {
    if (id >= m) throw ConsistencyError("plan references expert " + std::to_string(id));
    if (seen[id]++) throw ConsistencyError("plan lists expert " + std::to_string(id) + " twice");
    if (tokens != expected[id].token_indices) {
      throw ConsistencyError("plan tokens for expert " + std::to_string(id) +
                             " differ from the batch's gate assignment");
    }
    total += tokens.size();
  };
  for (const auto& a : plan.s1) claim(a.expert_id, a.token_indices);
  for (const auto& d : plan.dropped) claim(d.expert_id, d.token_indices);
  for (const auto& g : plan.s2_groups) {
    std::vector<std::size_t> merged;
    for (std::size_t id : g.member_expert_ids) {
      if (id >= m) throw ConsistencyError("plan references expert " + std::to_string(id));
      if (seen[id]++) {
        throw ConsistencyError("plan lists expert " + std::to_string(id) + " twice");
      }
      const auto& tok = expected[id].token_indices;
      merged.insert(merged.end(), tok.begin(), tok.end());
    }
    if (merged != g.merged_token_indices) {
      throw ConsistencyError("plan group " + std::to_string(g.group_id) +
                             " tokens differ from the batch's gate assignment");
    }
    total += merged.size();
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!seen[i] && expected[i].token_count > 0) {
      throw ConsistencyError("plan omits expert " + std::to_string(i));
    }
  }
  if (total != plan.total_tokens) throw ConsistencyError("plan token total mismatch");
}

}  // namespace

std::vector<HiddenVector> moe_forward(const MoELayer& layer, const TokenBatch& batch,
                                      const RoutingPlan& plan) {
  const std::size_t m = layer.num_experts();
  const std::size_t n = batch.size();
  if (batch.gates.size() != n) throw ConsistencyError("batch has tokens without gate results");
  for (const auto& x : batch.tokens) {
    if (x.size() != layer.d) throw ShapeError("token dimension differs from layer d");
  }
  const auto expected = assignments_from_batch(batch, m);
  check_plan_matches(plan, expected, m);

  // Executor slots: [0, m) originals, [m, m + groups) united experts.
  const std::size_t groups = layer.num_groups();
  std::vector<std::vector<std::size_t>> exec_tokens(m + groups);
  std::vector<std::vector<long>> exec_slot(m + groups);
  auto slot_of = [&](const Executor& e) {
    return e.kind == Executor::Kind::kOriginal ? e.id : m + e.id;
  };
  std::vector<std::optional<Executor>> route(m);
  for (std::size_t i = 0; i < m; ++i) route[i] = plan.executor_for(i);

  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t e : batch.gates[t].experts) {
      if (!route[e]) continue;
      const std::size_t s = slot_of(*route[e]);
      if (route[e]->kind == Executor::Kind::kUnited && layer.united_bank.size() != groups) {
        throw ConsistencyError("plan delegates to united experts but the layer has none");
      }
      auto& slots = exec_slot[s];
      if (slots.empty()) slots.assign(n, -1);
      if (slots[t] < 0) {
        slots[t] = static_cast<long>(exec_tokens[s].size());
        exec_tokens[s].push_back(t);
      }
    }
  }

  std::vector<std::vector<HiddenVector>> exec_out(m + groups);
  for (std::size_t s = 0; s < m + groups; ++s) {
    if (exec_tokens[s].empty()) continue;
    std::vector<HiddenVector> inputs;
    inputs.reserve(exec_tokens[s].size());
    for (std::size_t t : exec_tokens[s]) inputs.push_back(batch.tokens[t]);
    const ExpertFFN& ffn = s < m ? layer.routed_experts[s] : layer.united_bank[s - m];
    exec_out[s] = expert_forward(ffn, inputs);
  }

  std::vector<std::vector<HiddenVector>> shared_out;
  shared_out.reserve(layer.shared_experts.size());
  for (const auto& se : layer.shared_experts) shared_out.push_back(expert_forward(se, batch.tokens));

  std::vector<HiddenVector> out(batch.tokens);
  for (std::size_t t = 0; t < n; ++t) {
    HiddenVector& acc = out[t];
    for (const auto& so : shared_out) {
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += so[t][j];
    }
    const GateResult& g = batch.gates[t];
    for (std::size_t r = 0; r < g.experts.size(); ++r) {
      const auto& exec = route[g.experts[r]];
      if (!exec) continue;
      const std::size_t s = slot_of(*exec);
      const HiddenVector& y = exec_out[s][static_cast<std::size_t>(exec_slot[s][t])];
      const double w = g.weights[r];
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w * y[j];
    }
  }
  return out;
}

}  // namespace brownout
