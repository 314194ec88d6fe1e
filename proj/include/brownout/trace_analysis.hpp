#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "brownout/serve_sim.hpp"

namespace brownout {

struct BucketPoint {
  double start = 0.0;  // bucket covers [start, start + width)
  std::size_t count = 0;
  double p90 = 0.0;
};

struct StageAnalysis {
  LatencySummary summary;
  std::vector<BucketPoint> p90_series;  // only buckets holding samples
};

struct TraceAnalysis {
  double bucket_width = 1.0;
  StageAnalysis prefill;
  StageAnalysis decode;
};

/// Per-stage percentiles, violation rates, mean threshold_at_emit and a P90
/// series bucketed by floor(emit_time / bucket_width).
TraceAnalysis analyze_records(std::span<const TokenLatencyRecord> records, double prefill_slo,
                              double decode_slo, double bucket_width = 1.0);

/// Records of one stage with emit_time in [from, to).
std::vector<double> stage_latencies(std::span<const TokenLatencyRecord> records, Stage stage,
                                    double from, double to);

nlohmann::json analysis_to_json(const TraceAnalysis& a);

}  // namespace brownout
