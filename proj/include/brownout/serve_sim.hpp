#pragma once

// Discrete-event serving loop. Each engine iteration admits waiting requests
// FCFS up to the batch cap, prefills the newly admitted ones and decodes one
// token for every running request. Per MoE layer the iteration's tokens are
// gated, planned under the current per-stage brownout threshold, and charged
// through a linear cost model. SALC closes the loop on observed latency.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "brownout/brownout_router.hpp"
#include "brownout/moe_core.hpp"
#include "brownout/salc.hpp"
#include "brownout/workload.hpp"

namespace brownout {

struct CostModel {
  double attn_per_token = 0.0;      // seconds per batch token
  double moe_fixed = 0.0;           // seconds per layer per MoE invocation
  double expert_access_cost = 0.0;  // seconds per accessed expert
  double per_token_compute = 0.0;   // seconds per (token x expert) visit
  double iteration_overhead = 0.0;  // seconds per iteration

  void validate() const;
};

/// MoE share of an iteration: sum over layers of
/// moe_fixed + experts_accessed * expert_access_cost + visits * per_token_compute.
/// Dropped tokens are not visits.
double moe_latency(const CostModel& cost, std::span<const PlanStats> per_layer_stats);

/// iteration_overhead + batch_tokens * attn_per_token + moe_latency(...).
double iteration_latency(const CostModel& cost, std::size_t batch_tokens,
                         std::span<const PlanStats> per_layer_stats);

enum class ControllerMode { kOff, kStatic, kSalc };

struct ControllerConfig {
  ControllerMode mode = ControllerMode::kOff;
  SalcParams prefill;  // slo overwritten by SimConfig::prefill_slo
  SalcParams decode;   // slo overwritten by SimConfig::decode_slo
};

struct SimConfig {
  std::size_t max_batch_size = 64;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  double prefill_slo = 0.25;
  double decode_slo = 0.15;
  std::size_t layers = 1;
  CostModel cost;
  ControllerConfig controller;
  /// `threshold` is fixed for kStatic, the starting point for kSalc, and
  /// ignored (treated as 1) for kOff.
  BrownoutConfig brownout;
  std::uint64_t seed = 0;
  /// Scale of a fixed mean offset added to synthetic hidden states. Larger
  /// values skew gate load toward a few popular experts.
  double token_bias = 0.0;
  /// Also run the numeric MoE forward pass, feeding each layer's output to the
  /// next. Latency is unaffected; gating then depends on real activations.
  bool execute_forward = false;
  /// Stop starting new iterations at this simulated time.
  double horizon = std::numeric_limits<double>::infinity();

  void validate(const MoELayer& layer) const;
  SalcParams salc_params(Stage stage) const;
};

struct TokenLatencyRecord {
  std::size_t request_id = 0;
  std::size_t token_index = 0;
  Stage stage = Stage::kDecode;
  double emit_time = 0.0;
  double latency = 0.0;  // TTFT for token 0, inter-token gap otherwise
  double threshold_at_emit = 1.0;
};

struct ThresholdSample {
  double time = 0.0;
  Stage stage = Stage::kDecode;
  double threshold = 1.0;
};

struct IterationRecord {
  double start_time = 0.0;
  double latency = 0.0;
  std::size_t prefill_tokens = 0;
  std::size_t decode_tokens = 0;
  double prefill_threshold = 1.0;
  double decode_threshold = 1.0;
  double moe_latency = 0.0;
  /// MoE latency the same routed tokens would have cost with every expert
  /// served by its original (zero brownout).
  double zero_brownout_moe_latency = 0.0;
  std::size_t experts_accessed = 0;
};

struct ActiveRequest {
  Request request;
  std::size_t emitted = 0;
  double last_emit = 0.0;
};

struct EngineState {
  double clock = 0.0;
  std::deque<Request> waiting;
  std::vector<ActiveRequest> running;
  std::optional<SalcController> prefill_controller;
  std::optional<SalcController> decode_controller;
  double static_threshold = 1.0;
  std::mt19937_64 rng;
  HiddenVector token_offset;
  std::vector<ThresholdSample> thresholds;
  std::vector<IterationRecord> iterations;
  std::size_t tokens_emitted = 0;
  std::size_t requests_completed = 0;

  EngineState(const SimConfig& cfg, const MoELayer& layer);

  double threshold(Stage stage) const;
};

/// One engine iteration. Returns the tokens emitted by it; with nothing
/// running or waiting the clock is left untouched and nothing is returned.
std::vector<TokenLatencyRecord> step(EngineState& engine, const SimConfig& cfg,
                                     const MoELayer& layer);

struct LatencySummary {
  std::size_t count = 0;
  std::optional<double> p50;
  std::optional<double> p90;
  std::optional<double> p99;
  double violation_rate = 0.0;
  double mean_threshold = 1.0;
};

struct SimReport {
  double throughput = 0.0;  // output tokens per second
  LatencySummary prefill;
  LatencySummary decode;
  std::size_t requests_total = 0;
  std::size_t requests_completed = 0;
  std::size_t requests_pending = 0;
  std::size_t tokens_emitted = 0;
  std::size_t iterations = 0;
  double start_time = 0.0;
  double end_time = 0.0;
};

struct SimResult {
  SimReport report;
  std::vector<TokenLatencyRecord> records;
  std::vector<ThresholdSample> thresholds;
  std::vector<IterationRecord> iterations;
};

/// Replays `trace` (time-ordered) through the engine until every request
/// completes or the horizon is reached. Deterministic in (trace, cfg, layer).
SimResult run_simulation(std::span<const Request> trace, const SimConfig& cfg,
                         const MoELayer& layer);

struct StageRates {
  double prefill = 0.0;
  double decode = 0.0;
};

/// Fraction of each stage's tokens whose latency exceeds that stage's SLO.
StageRates violation_rate(std::span<const TokenLatencyRecord> records, double prefill_slo,
                          double decode_slo);

nlohmann::json report_to_json(const SimReport& report);

/// `stage,request_id,token_index,emit_time_s,latency_s,threshold_at_emit`
void write_records_csv(std::ostream& os, std::span<const TokenLatencyRecord> records);
std::vector<TokenLatencyRecord> read_records_csv(std::istream& is);
/// `time_s,stage,threshold`
void write_thresholds_csv(std::ostream& os, std::span<const ThresholdSample> samples);

}  // namespace brownout
