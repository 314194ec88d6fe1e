#pragma once

// Toy numeric Mixture-of-Experts layer: dot-product gating with top-K softmax,
// two-layer expert FFNs, and the brownout forward pass that mixes original
// and united experts according to a RoutingPlan.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace brownout {

struct RoutingPlan;

using HiddenVector = std::vector<double>;

/// Dense row-major matrix of 64-bit reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// y = M x, accumulated left to right along each row starting from 0.0.
  std::vector<double> multiply(std::span<const double> x) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { kRelu, kIdentity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Two-layer feed-forward expert: out = down * act(up * x).
/// `up` is hidden x model (h rows, d cols); `down` is model x hidden.
struct ExpertFFN {
  Matrix up;
  Matrix down;
  Activation activation = Activation::kRelu;

  std::size_t model_dim() const { return up.cols(); }
  std::size_t hidden_dim() const { return up.rows(); }

  /// Throws ShapeError unless up is h x d and down is d x h.
  void validate() const;

  friend bool operator==(const ExpertFFN&, const ExpertFFN&) = default;
};

struct GateUnit {
  std::vector<HiddenVector> centroids;  // one per routed expert
  std::size_t top_k = 1;

  std::size_t num_experts() const { return centroids.size(); }
};

struct MoELayer {
  std::size_t d = 0;
  std::size_t h = 0;
  std::size_t group_way = 1;  // k: original experts per united expert
  GateUnit gate;
  std::vector<ExpertFFN> routed_experts;
  std::vector<ExpertFFN> shared_experts;
  std::vector<ExpertFFN> united_bank;  // ceil(m / k) entries once distilled

  std::size_t num_experts() const { return routed_experts.size(); }
  std::size_t num_groups() const;
  std::size_t group_of(std::size_t expert_id) const { return expert_id / group_way; }

  /// Checks every structural invariant. `require_united` also demands a full bank.
  void validate(bool require_united = false) const;
};

/// Gate output for one token: K distinct expert ids with their softmax weights,
/// ordered by ascending expert id.
struct GateResult {
  std::vector<std::size_t> experts;
  std::vector<double> weights;
};

struct TokenBatch {
  std::vector<HiddenVector> tokens;
  std::vector<GateResult> gates;

  std::size_t size() const { return tokens.size(); }
};

struct ExpertAssignment;

/// s_i = <x, centroid_i> for every routed expert.
std::vector<double> gate_scores(std::span<const double> x, const GateUnit& gate);

/// Dense length-m weight vector with exactly K nonzero entries: softmax over the
/// K largest scores. Ties go to the lower expert id.
std::vector<double> gate_weights(std::span<const double> scores, std::size_t top_k);

/// Sparse form of gate_weights, ascending expert id.
GateResult top_k_gate(std::span<const double> scores, std::size_t top_k);

std::vector<HiddenVector> expert_forward(const ExpertFFN& expert,
                                         std::span<const HiddenVector> tokens);

/// Runs the gate over every token.
TokenBatch route_tokens(const MoELayer& layer, std::vector<HiddenVector> tokens);

/// Per-expert token lists (batch positions) derived from gate results; one entry
/// per expert id in [0, m), zero-count experts included.
std::vector<ExpertAssignment> assignments_from_batch(const TokenBatch& batch,
                                                     std::size_t num_experts);

/// Brownout MoE forward: residual + shared experts + original experts for S1
/// pairs + united experts for delegated pairs. Dropped pairs contribute nothing.
/// Contributions are accumulated per token in ascending expert id order.
std::vector<HiddenVector> moe_forward(const MoELayer& layer, const TokenBatch& batch,
                                      const RoutingPlan& plan);

}  // namespace brownout
