#include "brownout/serve_sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "brownout/csv.hpp"
#include "brownout/error.hpp"
#include "brownout/percentile.hpp"

namespace brownout {

void CostModel::validate() const {
  for (double v : {attn_per_token, moe_fixed, expert_access_cost, per_token_compute,
                   iteration_overhead}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("cost model terms must be >= 0");
  }
}

double moe_latency(const CostModel& cost, std::span<const PlanStats> per_layer_stats) {
  double total = 0.0;
  for (const auto& s : per_layer_stats) {
    total += cost.moe_fixed + static_cast<double>(s.experts_accessed) * cost.expert_access_cost +
             static_cast<double>(s.processed_tokens()) * cost.per_token_compute;
  }
  return total;
}

double iteration_latency(const CostModel& cost, std::size_t batch_tokens,
                         std::span<const PlanStats> per_layer_stats) {
  return cost.iteration_overhead + static_cast<double>(batch_tokens) * cost.attn_per_token +
         moe_latency(cost, per_layer_stats);
}

void SimConfig::validate(const MoELayer& layer) const {
  if (max_batch_size < 1) throw ParameterError("max_batch_size must be positive");
  if (max_seq_len < 2) throw ParameterError("max_seq_len must be at least 2");
  if (!(prefill_slo > 0.0) || !(decode_slo > 0.0)) throw ParameterError("SLOs must be positive");
  if (layers < 1) throw ParameterError("layers must be positive");
  if (!(token_bias >= 0.0)) throw ParameterError("token_bias must be nonnegative");
  if (!(horizon > 0.0)) throw ParameterError("horizon must be positive");
  cost.validate();
  brownout.validate();
  layer.validate();
  if (brownout.way != layer.group_way) {
    throw ConsistencyError("brownout way k=" + std::to_string(brownout.way) +
                           " differs from the layer's grouping k=" +
                           std::to_string(layer.group_way));
  }
  if (controller.mode == ControllerMode::kSalc) {
    salc_params(Stage::kPrefill).validate();
    salc_params(Stage::kDecode).validate();
  }
  const bool delegates = controller.mode != ControllerMode::kOff && !brownout.use_full_brownout;
  if (execute_forward && delegates && layer.united_bank.size() != layer.num_groups()) {
    throw ConsistencyError("execute_forward with partial brownout needs a distilled layer");
  }
}

SalcParams SimConfig::salc_params(Stage stage) const {
  SalcParams p = stage == Stage::kPrefill ? controller.prefill : controller.decode;
  p.slo = stage == Stage::kPrefill ? prefill_slo : decode_slo;
  return p;
}

EngineState::EngineState(const SimConfig& cfg, const MoELayer& layer) : rng(cfg.seed) {
  if (cfg.controller.mode == ControllerMode::kSalc) {
    prefill_controller.emplace(cfg.salc_params(Stage::kPrefill), Stage::kPrefill,
                               cfg.brownout.threshold);
    decode_controller.emplace(cfg.salc_params(Stage::kDecode), Stage::kDecode,
                              cfg.brownout.threshold);
  }
  static_threshold = cfg.controller.mode == ControllerMode::kOff ? 1.0 : cfg.brownout.threshold;

  // Fixed mean offset along a seeded unit direction.
  std::mt19937_64 dir_rng(cfg.seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  token_offset.assign(layer.d, 0.0);
  double norm = 0.0;
  for (double& v : token_offset) {
    v = normal(dir_rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : token_offset) v = norm > 0.0 ? v / norm * cfg.token_bias : 0.0;
}

double EngineState::threshold(Stage stage) const {
  const auto& ctl = stage == Stage::kPrefill ? prefill_controller : decode_controller;
  return ctl ? ctl->threshold() : static_threshold;
}

namespace {

std::vector<HiddenVector> draw_tokens(EngineState& engine, std::size_t count) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<HiddenVector> out(count, engine.token_offset);
  for (auto& x : out) {
    for (double& v : x) v += normal(engine.rng);
  }
  return out;
}

PlanStats zero_brownout_stats(std::span<const ExpertAssignment> assignments) {
  PlanStats s;
  for (const auto& a : assignments) {
    if (a.token_count == 0) continue;
    ++s.experts_accessed;
    s.tokens_via_originals += a.token_count;
  }
  return s;
}

}  // namespace

std::vector<TokenLatencyRecord> step(EngineState& engine, const SimConfig& cfg,
                                     const MoELayer& layer) {
  while (engine.running.size() < cfg.max_batch_size && !engine.waiting.empty()) {
    ActiveRequest a;
    a.request = engine.waiting.front();
    engine.waiting.pop_front();
    engine.running.push_back(a);
  }
  if (engine.running.empty()) return {};

  std::size_t prefill_tokens = 0;
  std::size_t decode_tokens = 0;
  for (const auto& a : engine.running) {
    if (a.emitted == 0) {
      prefill_tokens += a.request.input_len;
    } else {
      ++decode_tokens;
    }
  }

  IterationRecord it;
  it.start_time = engine.clock;
  it.prefill_tokens = prefill_tokens;
  it.decode_tokens = decode_tokens;
  it.prefill_threshold = engine.threshold(Stage::kPrefill);
  it.decode_threshold = engine.threshold(Stage::kDecode);

  const std::size_t m = layer.num_experts();
  std::vector<PlanStats> layer_stats(cfg.layers);
  std::vector<PlanStats> zero_stats(cfg.layers);
  struct StageBatch {
    std::size_t count;
    double threshold;
    std::vector<HiddenVector> hidden;
  };
  StageBatch stages[] = {{prefill_tokens, it.prefill_threshold, {}},
                         {decode_tokens, it.decode_threshold, {}}};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    for (auto& sb : stages) {
      if (sb.count == 0) continue;
      if (!cfg.execute_forward || l == 0) sb.hidden = draw_tokens(engine, sb.count);
      TokenBatch batch = route_tokens(layer, std::move(sb.hidden));
      const auto assignments = assignments_from_batch(batch, m);
      BrownoutConfig bc = cfg.brownout;
      bc.threshold = sb.threshold;
      const RoutingPlan plan = plan_brownout(assignments, m, bc);
      layer_stats[l] += plan_stats(plan, m);
      zero_stats[l] += zero_brownout_stats(assignments);
      if (cfg.execute_forward) {
        sb.hidden = moe_forward(layer, batch, plan);
      } else {
        sb.hidden.clear();
      }
    }
  }

  it.moe_latency = moe_latency(cfg.cost, layer_stats);
  it.zero_brownout_moe_latency = moe_latency(cfg.cost, zero_stats);
  for (const auto& s : layer_stats) it.experts_accessed += s.experts_accessed;
  it.latency = iteration_latency(cfg.cost, prefill_tokens + decode_tokens, layer_stats);
  engine.clock += it.latency;
  engine.iterations.push_back(it);

  std::vector<TokenLatencyRecord> records;
  records.reserve(engine.running.size());
  // Prefill records first, then decode, so each stage stays time-ordered.
  for (int pass = 0; pass < 2; ++pass) {
    for (auto& a : engine.running) {
      const bool is_prefill = a.emitted == 0;
      if (is_prefill != (pass == 0)) continue;
      TokenLatencyRecord r;
      r.request_id = a.request.id;
      r.token_index = a.emitted;
      r.stage = is_prefill ? Stage::kPrefill : Stage::kDecode;
      r.emit_time = engine.clock;
      r.latency = is_prefill ? engine.clock - a.request.arrival_time : engine.clock - a.last_emit;
      r.threshold_at_emit = is_prefill ? it.prefill_threshold : it.decode_threshold;
      records.push_back(r);
    }
  }
  for (auto& a : engine.running) {
    ++a.emitted;
    a.last_emit = engine.clock;
  }
  engine.tokens_emitted += records.size();

  const auto done = std::stable_partition(engine.running.begin(), engine.running.end(),
                                          [](const ActiveRequest& a) {
                                            return a.emitted < a.request.output_len;
                                          });
  engine.requests_completed += static_cast<std::size_t>(engine.running.end() - done);
  engine.running.erase(done, engine.running.end());

  for (const auto& r : records) {
    auto& ctl = r.stage == Stage::kPrefill ? engine.prefill_controller : engine.decode_controller;
    if (ctl) ctl->observe(r.emit_time, r.latency);
  }
  for (Stage s : {Stage::kPrefill, Stage::kDecode}) {
    auto& ctl = s == Stage::kPrefill ? engine.prefill_controller : engine.decode_controller;
    if (ctl) ctl->update(engine.clock);
    engine.thresholds.push_back({engine.clock, s, engine.threshold(s)});
  }
  return records;
}

namespace {

LatencySummary summarize(const std::vector<double>& latencies, double slo,
                         const std::vector<double>& thresholds) {
  LatencySummary s;
  s.count = latencies.size();
  s.p50 = nearest_rank_percentile(latencies, 50);
  s.p90 = nearest_rank_percentile(latencies, 90);
  s.p99 = nearest_rank_percentile(latencies, 99);
  std::size_t over = 0;
  for (double v : latencies) over += v > slo ? 1 : 0;
  s.violation_rate = latencies.empty() ? 0.0 : static_cast<double>(over) / static_cast<double>(s.count);
  if (!thresholds.empty()) {
    double sum = 0.0;
    for (double t : thresholds) sum += t;
    s.mean_threshold = sum / static_cast<double>(thresholds.size());
  }
  return s;
}

}  // namespace

SimResult run_simulation(std::span<const Request> trace, const SimConfig& cfg,
                         const MoELayer& layer) {
  cfg.validate(layer);
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].arrival_time < trace[i - 1].arrival_time) {
      throw ConsistencyError("trace must be ordered by arrival time");
    }
  }
  for (const auto& r : trace) {
    if (r.input_len < 1 || r.output_len < 1 || r.input_len + r.output_len > cfg.max_seq_len) {
      throw ParameterError("request " + std::to_string(r.id) + " violates length bounds");
    }
  }

  EngineState engine(cfg, layer);
  SimResult result;
  std::size_t next = 0;
  if (!trace.empty()) engine.clock = trace.front().arrival_time;
  while (true) {
    while (next < trace.size() && trace[next].arrival_time <= engine.clock) {
      engine.waiting.push_back(trace[next++]);
    }
    if (engine.running.empty() && engine.waiting.empty()) {
      if (next == trace.size()) break;
      engine.clock = trace[next].arrival_time;
      continue;
    }
    if (engine.clock >= cfg.horizon) break;
    auto recs = step(engine, cfg, layer);
    result.records.insert(result.records.end(), recs.begin(), recs.end());
  }

  SimReport& rep = result.report;
  rep.requests_total = trace.size();
  rep.requests_completed = engine.requests_completed;
  rep.requests_pending = trace.size() - engine.requests_completed;
  rep.tokens_emitted = engine.tokens_emitted;
  rep.iterations = engine.iterations.size();
  rep.start_time = trace.empty() ? 0.0 : trace.front().arrival_time;
  rep.end_time = trace.empty() ? 0.0 : engine.clock;
  const double span = rep.end_time - rep.start_time;
  rep.throughput = span > 0.0 ? static_cast<double>(rep.tokens_emitted) / span : 0.0;

  std::vector<double> lat[2];
  for (const auto& r : result.records) lat[r.stage == Stage::kPrefill ? 0 : 1].push_back(r.latency);
  std::vector<double> thr[2];
  for (const auto& it : engine.iterations) {
    if (it.prefill_tokens > 0) thr[0].push_back(it.prefill_threshold);
    if (it.decode_tokens > 0) thr[1].push_back(it.decode_threshold);
  }
  rep.prefill = summarize(lat[0], cfg.prefill_slo, thr[0]);
  rep.decode = summarize(lat[1], cfg.decode_slo, thr[1]);

  result.thresholds = std::move(engine.thresholds);
  result.iterations = std::move(engine.iterations);
  return result;
}

StageRates violation_rate(std::span<const TokenLatencyRecord> records, double prefill_slo,
                          double decode_slo) {
  std::size_t n[2] = {0, 0};
  std::size_t over[2] = {0, 0};
  for (const auto& r : records) {
    const int s = r.stage == Stage::kPrefill ? 0 : 1;
    ++n[s];
    if (r.latency > (s == 0 ? prefill_slo : decode_slo)) ++over[s];
  }
  auto frac = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  return {frac(over[0], n[0]), frac(over[1], n[1])};
}

nlohmann::json report_to_json(const SimReport& report) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  auto stage = [&](const LatencySummary& s) {
    return nlohmann::json{{"count", s.count},
                          {"p50_s", opt(s.p50)},
                          {"p90_s", opt(s.p90)},
                          {"p99_s", opt(s.p99)},
                          {"violation_rate", s.violation_rate},
                          {"mean_threshold", s.mean_threshold}};
  };
  return {{"throughput_tokens_per_s", report.throughput},
          {"prefill", stage(report.prefill)},
          {"decode", stage(report.decode)},
          {"requests_total", report.requests_total},
          {"requests_completed", report.requests_completed},
          {"requests_pending", report.requests_pending},
          {"tokens_emitted", report.tokens_emitted},
          {"iterations", report.iterations},
          {"start_time_s", report.start_time},
          {"end_time_s", report.end_time}};
}

void write_records_csv(std::ostream& os, std::span<const TokenLatencyRecord> records) {
  os << "stage,request_id,token_index,emit_time_s,latency_s,threshold_at_emit\n";
  for (const auto& r : records) {
    os << to_string(r.stage) << ',' << r.request_id << ',' << r.token_index << ','
       << format_real(r.emit_time) << ',' << format_real(r.latency) << ','
       << format_real(r.threshold_at_emit) << '\n';
  }
}

std::vector<TokenLatencyRecord> read_records_csv(std::istream& is) {
  std::vector<TokenLatencyRecord> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (trim(line) != "stage,request_id,token_index,emit_time_s,latency_s,threshold_at_emit") {
        throw FormatError("records CSV line " + std::to_string(line_no) + ": unexpected header");
      }
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      throw FormatError("records CSV line " + std::to_string(line_no) + ": expected 6 fields, got " +
                        std::to_string(f.size()));
    }
    TokenLatencyRecord r;
    try {
      r.stage = stage_from_string(f[0]);
    } catch (const FormatError&) {
      throw FormatError("records CSV line " + std::to_string(line_no) + ": unknown stage '" + f[0] +
                        "'");
    }
    r.request_id = parse_size(f[1], line_no);
    r.token_index = parse_size(f[2], line_no);
    r.emit_time = parse_real(f[3], line_no);
    r.latency = parse_real(f[4], line_no);
    r.threshold_at_emit = parse_real(f[5], line_no);
    if (r.latency < 0.0) {
      throw FormatError("records CSV line " + std::to_string(line_no) + ": negative latency");
    }
    out.push_back(r);
  }
  return out;
}

void write_thresholds_csv(std::ostream& os, std::span<const ThresholdSample> samples) {
  os << "time_s,stage,threshold\n";
  for (const auto& s : samples) {
    os << format_real(s.time) << ',' << to_string(s.stage) << ',' << format_real(s.threshold) << '\n';
  }
}

}  // namespace brownout
