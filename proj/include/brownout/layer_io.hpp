#pragma once

// JSON form of a MoE layer and a seeded random-layer factory.
//
// Document fields: d, h, m, k, n_shared, top_k, activation, centroids (m*d,
// row-major), routed / shared / united (arrays of {"up": h*d, "down": d*h},
// row-major). `united` is empty until the layer has been distilled.

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "brownout/moe_core.hpp"

namespace brownout {

struct LayerShape {
  std::size_t d = 8;
  std::size_t h = 16;
  std::size_t m = 8;
  std::size_t k = 2;
  std::size_t n_shared = 0;
  std::size_t top_k = 2;
  Activation activation = Activation::kRelu;
};

/// Gaussian weights scaled by 1/sqrt(fan-in); centroids are standard normal.
MoELayer make_random_layer(const LayerShape& shape, std::uint64_t seed);

nlohmann::json layer_to_json(const MoELayer& layer);
/// Throws FormatError on missing fields or wrong array lengths.
MoELayer layer_from_json(const nlohmann::json& doc);

MoELayer load_layer(const std::string& path);
void save_layer(const MoELayer& layer, const std::string& path);

}  // namespace brownout
