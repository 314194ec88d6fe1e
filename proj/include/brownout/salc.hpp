#pragma once

// SLO-aware latency control: a per-stage feedback loop on the brownout
// threshold. Recent P90 latency below the warning line grows the threshold
// additively; P90 above the SLO shrinks it multiplicatively; in between the
// threshold is held.

#include <atomic>
#include <deque>
#include <limits>
#include <optional>
#include <string>

namespace brownout {

enum class Stage { kPrefill, kDecode };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct SalcParams {
  double slo = 0.15;           // seconds
  double warning_factor = 0.8;
  double tw = 1.0;             // window length, seconds
  double increment = 0.1;
  double shrink_ratio = 0.8;
  double threshold_floor = 0.0;
  double threshold_cap = 1.0;

  double warning_line() const { return slo * warning_factor; }
  void validate() const;
};

struct LatencySample {
  double time = 0.0;
  double latency = 0.0;
};

/// Time-ordered latency samples. Samples at or before (t - retention) are
/// evicted when a sample at time t is recorded.
class LatencyWindow {
 public:
  explicit LatencyWindow(double retention = std::numeric_limits<double>::infinity());

  /// Throws OrderingError if `t` precedes the last sample, ParameterError on
  /// a negative latency.
  void record(double t, double latency);

  /// Nearest-rank P90 over samples with timestamp in (now - tw, now].
  std::optional<double> p90(double now, double tw) const;

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::deque<LatencySample>& samples() const { return samples_; }

 private:
  double retention_;
  std::deque<LatencySample> samples_;
};

void record_latency(LatencyWindow& w, double t, double latency);
std::optional<double> p90(const LatencyWindow& w, double now, double tw);

struct SalcState {
  double threshold = 1.0;
  Stage stage = Stage::kDecode;
};

/// One step of the controller; returns the new threshold (clamped to
/// [floor, cap]). An empty window leaves the threshold unchanged.
double salc_update(const SalcState& state, const SalcParams& p, const LatencyWindow& w,
                   double now);

/// Controller instance for one stage: owns its window and current threshold.
/// Single writer; threshold() may be read from any thread.
class SalcController {
 public:
  SalcController(SalcParams params, Stage stage, double initial_threshold);
  SalcController(const SalcController& other);
  SalcController& operator=(const SalcController& other);

  void observe(double t, double latency) { window_.record(t, latency); }
  double update(double now);

  double threshold() const { return threshold_.load(std::memory_order_acquire); }
  Stage stage() const { return stage_; }
  const SalcParams& params() const { return params_; }
  const LatencyWindow& window() const { return window_; }

 private:
  SalcParams params_;
  Stage stage_;
  LatencyWindow window_;
  std::atomic<double> threshold_;
};

}  // namespace brownout
