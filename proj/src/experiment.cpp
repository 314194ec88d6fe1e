#include "brownout/experiment.hpp"

#include <fstream>

#include "brownout/error.hpp"
#include "brownout/layer_io.hpp"

namespace brownout {

namespace {

using nlohmann::json;

const json& section(const json& doc, const char* key) {
  static const json kEmpty = json::object();
  if (!doc.contains(key)) return kEmpty;
  if (!doc[key].is_object()) throw FormatError(std::string("config section '") + key + "' must be an object");
  return doc[key];
}

template <typename T>
T get_or(const json& node, const char* key, T fallback) {
  if (!node.contains(key) || node[key].is_null()) return fallback;
  try {
    return node[key].get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("config field '") + key + "' has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

SalcParams salc_from_json(const json& node) {
  SalcParams p;
  p.warning_factor = get_or(node, "warning_factor", p.warning_factor);
  p.tw = get_or(node, "tw", p.tw);
  p.increment = get_or(node, "increment", p.increment);
  p.shrink_ratio = get_or(node, "shrink_ratio", p.shrink_ratio);
  p.threshold_floor = get_or(node, "threshold_floor", p.threshold_floor);
  p.threshold_cap = get_or(node, "threshold_cap", p.threshold_cap);
  return p;
}

ControllerMode mode_from_string(const std::string& s) {
  if (s == "off") return ControllerMode::kOff;
  if (s == "static") return ControllerMode::kStatic;
  if (s == "salc") return ControllerMode::kSalc;
  throw FormatError("controller mode must be off, static or salc; got '" + s + "'");
}

}  // namespace

LengthDistribution length_distribution_from_json(const json& node,
                                                 const std::filesystem::path& base_dir) {
  if (!node.is_object()) throw FormatError("length distribution must be an object");
  if (node.contains("profile")) {
    const auto profile = node["profile"].get<std::string>();
    const auto part = get_or<std::string>(node, "part", "input");
    const bool input = part == "input";
    if (profile == "alpaca") {
      return input ? LengthDistribution::alpaca_like_input() : LengthDistribution::alpaca_like_output();
    }
    if (profile == "sharegpt") {
      return input ? LengthDistribution::sharegpt_like_input()
                   : LengthDistribution::sharegpt_like_output();
    }
    throw FormatError("unknown length profile '" + profile + "'");
  }
  const auto kind = get_or<std::string>(node, "kind", "");
  if (kind == "constant") return LengthDistribution::constant(get_or<std::size_t>(node, "value", 1));
  if (kind == "uniform") {
    return LengthDistribution::uniform(get_or<std::size_t>(node, "min", 1),
                                       get_or<std::size_t>(node, "max", 1));
  }
  if (kind == "lognormal") {
    return LengthDistribution::lognormal(get_or(node, "median", 1.0), get_or(node, "sigma", 0.0));
  }
  if (kind == "empirical") {
    if (node.contains("values")) {
      return LengthDistribution::empirical(node["values"].get<std::vector<std::size_t>>());
    }
    return LengthDistribution::empirical_from_file(
        resolve(base_dir, get_or<std::string>(node, "file", "")).string());
  }
  throw FormatError("length distribution needs 'profile' or a known 'kind'; got '" + kind + "'");
}

Experiment experiment_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw FormatError("config must be a JSON object");
  Experiment ex;
  SimConfig& sim = ex.sim;

  const json& engine = section(doc, "engine");
  sim.max_batch_size = get_or(engine, "max_batch_size", sim.max_batch_size);
  sim.max_seq_len = get_or(engine, "max_seq_len", sim.max_seq_len);
  sim.prefill_slo = get_or(engine, "prefill_slo", sim.prefill_slo);
  sim.decode_slo = get_or(engine, "decode_slo", sim.decode_slo);
  sim.layers = get_or(engine, "layers", sim.layers);
  sim.seed = get_or(engine, "seed", sim.seed);
  sim.token_bias = get_or(engine, "token_bias", sim.token_bias);
  sim.execute_forward = get_or(engine, "execute_forward", sim.execute_forward);
  sim.horizon = get_or(engine, "horizon", sim.horizon);

  const json& cost = section(doc, "cost");
  sim.cost.attn_per_token = get_or(cost, "attn_per_token", 0.0);
  sim.cost.moe_fixed = get_or(cost, "moe_fixed", 0.0);
  sim.cost.expert_access_cost = get_or(cost, "expert_access_cost", 0.0);
  sim.cost.per_token_compute = get_or(cost, "per_token_compute", 0.0);
  sim.cost.iteration_overhead = get_or(cost, "iteration_overhead", 0.0);

  const json& ctl = section(doc, "controller");
  sim.controller.mode = mode_from_string(get_or<std::string>(ctl, "mode", "off"));
  sim.controller.prefill = salc_from_json(section(ctl, "prefill"));
  sim.controller.decode = salc_from_json(section(ctl, "decode"));

  const json& bo = section(doc, "brownout");
  sim.brownout.way = get_or<std::size_t>(bo, "way", 1);
  sim.brownout.threshold = get_or(bo, "threshold", 1.0);
  sim.brownout.use_full_brownout = get_or(bo, "use_full_brownout", false);

  const json& model = section(doc, "model");
  if (model.contains("layer_file")) {
    ex.layer = load_layer(resolve(base_dir, model["layer_file"].get<std::string>()).string());
  } else {
    LayerShape shape;
    shape.d = get_or(model, "d", shape.d);
    shape.h = get_or(model, "h", shape.h);
    shape.m = get_or(model, "m", shape.m);
    shape.k = sim.brownout.way;
    shape.top_k = get_or(model, "top_k", shape.top_k);
    shape.n_shared = get_or(model, "n_shared", shape.n_shared);
    shape.activation = activation_from_string(get_or<std::string>(model, "activation", "relu"));
    ex.layer = make_random_layer(shape, get_or<std::uint64_t>(model, "seed", 0));
  }

  const json& wl = section(doc, "workload");
  if (wl.contains("trace_csv")) {
    const auto path = resolve(base_dir, wl["trace_csv"].get<std::string>());
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trace '" + path.string() + "'");
    ex.trace = read_trace_csv(in);
  } else if (wl.contains("schedule")) {
    RateSchedule schedule;
    for (const auto& seg : wl["schedule"]) {
      schedule.segments.push_back({get_or(seg, "start", 0.0), get_or(seg, "end", 0.0),
                                   get_or(seg, "rps", 0.0)});
    }
    json in_node = wl.contains("input") ? wl["input"] : json{{"profile", "alpaca"}};
    json out_node = wl.contains("output") ? wl["output"] : json{{"profile", "alpaca"}};
    if (in_node.contains("profile") && !in_node.contains("part")) in_node["part"] = "input";
    if (out_node.contains("profile") && !out_node.contains("part")) out_node["part"] = "output";
    ex.trace = generate_trace(schedule, length_distribution_from_json(in_node, base_dir),
                              length_distribution_from_json(out_node, base_dir),
                              get_or<std::uint64_t>(wl, "seed", 0), sim.max_seq_len);
  }

  sim.validate(ex.layer);
  return ex;
}

Experiment load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
  return experiment_from_json(doc, std::filesystem::path(path).parent_path());
}

}  // namespace brownout
