#include "brownout/layer_io.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "brownout/error.hpp"

namespace brownout {

namespace {

ExpertFFN random_expert(const LayerShape& s, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ExpertFFN e;
  e.activation = s.activation;
  e.up = Matrix(s.h, s.d);
  e.down = Matrix(s.d, s.h);
  const double up_scale = 1.0 / std::sqrt(static_cast<double>(s.d));
  const double down_scale = 1.0 / std::sqrt(static_cast<double>(s.h));
  for (double& v : e.up.data()) v = normal(rng) * up_scale;
  for (double& v : e.down.data()) v = normal(rng) * down_scale;
  return e;
}

std::size_t require_size(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_unsigned()) {
    throw FormatError(std::string("layer document needs unsigned integer field '") + key + "'");
  }
  return doc[key].get<std::size_t>();
}

std::vector<double> require_array(const nlohmann::json& node, const std::string& what,
                                  std::size_t expected) {
  if (!node.is_array()) throw FormatError(what + " must be an array");
  std::vector<double> v;
  v.reserve(node.size());
  for (const auto& x : node) {
    if (!x.is_number()) throw FormatError(what + " must contain only numbers");
    v.push_back(x.get<double>());
  }
  if (v.size() != expected) {
    throw FormatError(what + " has " + std::to_string(v.size()) + " values, expected " +
                      std::to_string(expected));
  }
  return v;
}

nlohmann::json expert_to_json(const ExpertFFN& e) {
  return {{"up", e.up.data()}, {"down", e.down.data()}};
}

std::vector<ExpertFFN> experts_from_json(const nlohmann::json& doc, const char* key,
                                         std::size_t d, std::size_t h, Activation act) {
  std::vector<ExpertFFN> out;
  if (!doc.contains(key)) return out;
  const auto& arr = doc[key];
  if (!arr.is_array()) throw FormatError(std::string("'") + key + "' must be an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = std::string(key) + "[" + std::to_string(i) + "]";
    if (!arr[i].is_object() || !arr[i].contains("up") || !arr[i].contains("down")) {
      throw FormatError(where + " needs 'up' and 'down'");
    }
    ExpertFFN e;
    e.activation = act;
    e.up = Matrix(h, d, require_array(arr[i]["up"], where + ".up", h * d));
    e.down = Matrix(d, h, require_array(arr[i]["down"], where + ".down", d * h));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

MoELayer make_random_layer(const LayerShape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MoELayer layer;
  layer.d = s.d;
  layer.h = s.h;
  layer.group_way = s.k;
  layer.gate.top_k = s.top_k;
  layer.gate.centroids.assign(s.m, HiddenVector(s.d));
  for (auto& c : layer.gate.centroids) {
    for (double& v : c) v = normal(rng);
  }
  for (std::size_t i = 0; i < s.m; ++i) layer.routed_experts.push_back(random_expert(s, rng));
  for (std::size_t i = 0; i < s.n_shared; ++i) layer.shared_experts.push_back(random_expert(s, rng));
  layer.validate();
  return layer;
}

nlohmann::json layer_to_json(const MoELayer& layer) {
  nlohmann::json doc;
  doc["d"] = layer.d;
  doc["h"] = layer.h;
  doc["m"] = layer.num_experts();
  doc["k"] = layer.group_way;
  doc["n_shared"] = layer.shared_experts.size();
  doc["top_k"] = layer.gate.top_k;
  doc["activation"] =
      to_string(layer.routed_experts.empty() ? Activation::kRelu : layer.routed_experts[0].activation);
  std::vector<double> centroids;
  for (const auto& c : layer.gate.centroids) centroids.insert(centroids.end(), c.begin(), c.end());
  doc["centroids"] = centroids;
  auto list = [](const std::vector<ExpertFFN>& experts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : experts) arr.push_back(expert_to_json(e));
    return arr;
  };
  doc["routed"] = list(layer.routed_experts);
  doc["shared"] = list(layer.shared_experts);
  doc["united"] = list(layer.united_bank);
  return doc;
}

MoELayer layer_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("layer document must be a JSON object");
  MoELayer layer;
  layer.d = require_size(doc, "d");
  layer.h = require_size(doc, "h");
  const std::size_t m = require_size(doc, "m");
  layer.group_way = require_size(doc, "k");
  const std::size_t n_shared = require_size(doc, "n_shared");
  layer.gate.top_k = require_size(doc, "top_k");
  const Activation act =
      doc.contains("activation") ? activation_from_string(doc["activation"].get<std::string>())
                                 : Activation::kRelu;
  if (!doc.contains("centroids")) throw FormatError("layer document needs 'centroids'");
  const auto flat = require_array(doc["centroids"], "centroids", m * layer.d);
  for (std::size_t i = 0; i < m; ++i) {
    layer.gate.centroids.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * layer.d),
                                      flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * layer.d));
  }
  layer.routed_experts = experts_from_json(doc, "routed", layer.d, layer.h, act);
  layer.shared_experts = experts_from_json(doc, "shared", layer.d, layer.h, act);
  layer.united_bank = experts_from_json(doc, "united", layer.d, layer.h, act);
  if (layer.routed_experts.size() != m) {
    throw FormatError("layer declares m=" + std::to_string(m) + " but lists " +
                      std::to_string(layer.routed_experts.size()) + " routed experts");
  }
  if (layer.shared_experts.size() != n_shared) {
    throw FormatError("layer declares n_shared=" + std::to_string(n_shared) + " but lists " +
                      std::to_string(layer.shared_experts.size()));
  }
  layer.validate();
  return layer;
}

MoELayer load_layer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layer file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("layer file '" + path + "': " + e.what());
  }
  return layer_from_json(doc);
}

void save_layer(const MoELayer& layer, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write layer file '" + path + "'");
  out << layer_to_json(layer).dump(2) << '\n';
}

}  // namespace brownout
