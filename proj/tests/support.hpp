#pragma once

// Test-only helpers: seeded generators and a plain top-K MoE reference that
// shares no code with the library's forward pass.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "brownout/moe_core.hpp"

namespace brownout::testing {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

inline ExpertFFN random_expert(std::mt19937_64& rng, std::size_t d, std::size_t h,
                               Activation act = Activation::kRelu) {
  ExpertFFN e;
  e.activation = act;
  e.up = Matrix(h, d, random_vector(rng, h * d, 0.5));
  e.down = Matrix(d, h, random_vector(rng, d * h, 0.5));
  return e;
}

inline MoELayer random_layer(std::mt19937_64& rng, std::size_t d, std::size_t h, std::size_t m,
                             std::size_t k, std::size_t top_k, std::size_t n_shared,
                             bool with_united) {
  MoELayer layer;
  layer.d = d;
  layer.h = h;
  layer.group_way = k;
  layer.gate.top_k = top_k;
  for (std::size_t i = 0; i < m; ++i) layer.gate.centroids.push_back(random_vector(rng, d));
  for (std::size_t i = 0; i < m; ++i) layer.routed_experts.push_back(random_expert(rng, d, h));
  for (std::size_t i = 0; i < n_shared; ++i) layer.shared_experts.push_back(random_expert(rng, d, h));
  if (with_united) {
    for (std::size_t g = 0; g < (m + k - 1) / k; ++g) layer.united_bank.push_back(random_expert(rng, d, h));
  }
  return layer;
}

inline std::vector<double> ref_matvec(const Matrix& m, const std::vector<double>& x) {
  std::vector<double> y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) acc += m(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

inline std::vector<double> ref_expert(const ExpertFFN& e, const std::vector<double>& x) {
  auto z = ref_matvec(e.up, x);
  if (e.activation == Activation::kRelu) {
    for (double& v : z) v = v > 0.0 ? v : 0.0;
  }
  return ref_matvec(e.down, z);
}

/// Standard MoE: h = x + sum shared(x) + sum_{i in TopK} g_i routed_i(x),
/// routed terms added in ascending expert id. Top-K chosen by repeated argmax.
inline std::vector<std::vector<double>> reference_moe(const MoELayer& layer,
                                                      const std::vector<std::vector<double>>& xs) {
  std::vector<std::vector<double>> out;
  const std::size_t m = layer.routed_experts.size();
  for (const auto& x : xs) {
    std::vector<double> s(m);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) acc += x[j] * layer.gate.centroids[i][j];
      s[i] = acc;
    }
    std::vector<bool> chosen(m, false);
    for (std::size_t r = 0; r < layer.gate.top_k; ++r) {
      std::size_t best = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (!chosen[i] && (best == m || s[i] > s[best])) best = i;
      }
      chosen[best] = true;
    }
    double peak = -1e300;
    for (std::size_t i = 0; i < m; ++i) {
      if (chosen[i] && s[i] > peak) peak = s[i];
    }
    std::vector<double> w(m, 0.0);
    double denom = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (chosen[i]) {
        w[i] = std::exp(s[i] - peak);
        denom += w[i];
      }
    }
    std::vector<double> h = x;
    for (const auto& se : layer.shared_experts) {
      const auto y = ref_expert(se, x);
      for (std::size_t j = 0; j < h.size(); ++j) h[j] += y[j];
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (!chosen[i]) continue;
      const double g = w[i] / denom;
      const auto y = ref_expert(layer.routed_experts[i], x);
      for (std::size_t j = 0; j < h.size(); ++j) h[j] += g * y[j];
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace brownout::testing
