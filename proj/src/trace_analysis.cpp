#include "brownout/trace_analysis.hpp"

#include <cmath>
#include <map>

#include "brownout/error.hpp"
#include "brownout/percentile.hpp"

namespace brownout {

namespace {

StageAnalysis analyze_stage(std::span<const TokenLatencyRecord> records, Stage stage, double slo,
                            double width) {
  StageAnalysis out;
  std::vector<double> all;
  double threshold_sum = 0.0;
  std::size_t over = 0;
  std::map<long long, std::vector<double>> buckets;
  for (const auto& r : records) {
    if (r.stage != stage) continue;
    all.push_back(r.latency);
    threshold_sum += r.threshold_at_emit;
    if (r.latency > slo) ++over;
    buckets[static_cast<long long>(std::floor(r.emit_time / width))].push_back(r.latency);
  }
  LatencySummary& s = out.summary;
  s.count = all.size();
  if (!all.empty()) {
    s.violation_rate = static_cast<double>(over) / static_cast<double>(all.size());
    s.mean_threshold = threshold_sum / static_cast<double>(all.size());
  }
  s.p50 = nearest_rank_percentile(all, 50);
  s.p90 = nearest_rank_percentile(all, 90);
  s.p99 = nearest_rank_percentile(std::move(all), 99);
  for (auto& [index, values] : buckets) {
    BucketPoint p;
    p.start = static_cast<double>(index) * width;
    p.count = values.size();
    p.p90 = *nearest_rank_percentile(std::move(values), 90);
    out.p90_series.push_back(p);
  }
  return out;
}

}  // namespace

TraceAnalysis analyze_records(std::span<const TokenLatencyRecord> records, double prefill_slo,
                              double decode_slo, double bucket_width) {
  if (!(bucket_width > 0.0)) throw ParameterError("bucket width must be positive");
  TraceAnalysis a;
  a.bucket_width = bucket_width;
  a.prefill = analyze_stage(records, Stage::kPrefill, prefill_slo, bucket_width);
  a.decode = analyze_stage(records, Stage::kDecode, decode_slo, bucket_width);
  return a;
}

std::vector<double> stage_latencies(std::span<const TokenLatencyRecord> records, Stage stage,
                                    double from, double to) {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.stage == stage && r.emit_time >= from && r.emit_time < to) out.push_back(r.latency);
  }
  return out;
}

nlohmann::json analysis_to_json(const TraceAnalysis& a) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  auto stage = [&](const StageAnalysis& s) {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& p : s.p90_series) {
      series.push_back({{"t_s", p.start}, {"count", p.count}, {"p90_s", p.p90}});
    }
    return nlohmann::json{{"count", s.summary.count},
                          {"violation_rate", s.summary.violation_rate},
                          {"p50_s", opt(s.summary.p50)},
                          {"p90_s", opt(s.summary.p90)},
                          {"p99_s", opt(s.summary.p99)},
                          {"mean_threshold", s.summary.count ? nlohmann::json(s.summary.mean_threshold)
                                                             : nlohmann::json(nullptr)},
                          {"p90_series", series}};
  };
  return {{"bucket_s", a.bucket_width}, {"prefill", stage(a.prefill)}, {"decode", stage(a.decode)}};
}

}  // namespace brownout
