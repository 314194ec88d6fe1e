#include "brownout/salc.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "brownout/error.hpp"
#include "brownout/percentile.hpp"

namespace brownout {

std::string to_string(Stage s) { return s == Stage::kPrefill ? "prefill" : "decode"; }

Stage stage_from_string(const std::string& s) {
  if (s == "prefill") return Stage::kPrefill;
  if (s == "decode") return Stage::kDecode;
  throw FormatError("unknown stage '" + s + "'");
}

void SalcParams::validate() const {
  if (!(slo > 0.0)) throw ParameterError("SALC slo must be positive");
  if (!(warning_factor > 0.0 && warning_factor < 1.0)) {
    throw ParameterError("SALC warning_factor must lie in (0, 1)");
  }
  if (!(tw > 0.0)) throw ParameterError("SALC window tw must be positive");
  if (!(increment >= 0.0)) throw ParameterError("SALC increment must be nonnegative");
  if (!(shrink_ratio > 0.0 && shrink_ratio < 1.0)) {
    throw ParameterError("SALC shrink_ratio must lie in (0, 1)");
  }
  if (!(threshold_floor >= 0.0 && threshold_floor <= threshold_cap && threshold_cap <= 1.0)) {
    throw ParameterError("SALC bounds must satisfy 0 <= floor <= cap <= 1");
  }
}

LatencyWindow::LatencyWindow(double retention) : retention_(retention) {
  if (!(retention > 0.0)) throw ParameterError("window retention must be positive");
}

void LatencyWindow::record(double t, double latency) {
  if (!samples_.empty() && t < samples_.back().time) {
    throw OrderingError("latency sample at t=" + std::to_string(t) +
                        " precedes the previous sample at t=" +
                        std::to_string(samples_.back().time));
  }
  if (!(latency >= 0.0)) throw ParameterError("latency must be nonnegative");
  samples_.push_back({t, latency});
  if (std::isfinite(retention_)) {
    const double cutoff = t - retention_;
    while (!samples_.empty() && samples_.front().time <= cutoff) samples_.pop_front();
  }
}

std::optional<double> LatencyWindow::p90(double now, double tw) const {
  if (!(tw > 0.0)) throw ParameterError("p90 window must be positive");
  const double start = now - tw;
  std::vector<double> recent;
  // Samples are time-ordered, so walk back from the newest.
  for (auto it = samples_.rbegin(); it != samples_.rend() && it->time > start; ++it) {
    if (it->time <= now) recent.push_back(it->latency);
  }
  return nearest_rank_percentile(std::move(recent), 90);
}

void record_latency(LatencyWindow& w, double t, double latency) { w.record(t, latency); }

std::optional<double> p90(const LatencyWindow& w, double now, double tw) { return w.p90(now, tw); }

double salc_update(const SalcState& state, const SalcParams& p, const LatencyWindow& w,
                   double now) {
  const std::optional<double> latency = w.p90(now, p.tw);
  if (!latency) return state.threshold;
  double threshold = state.threshold;
  if (*latency < p.warning_line()) {
    threshold = threshold + p.increment;
  } else if (*latency > p.slo) {
    threshold = threshold * p.shrink_ratio;
  }
  return std::clamp(threshold, p.threshold_floor, p.threshold_cap);
}

SalcController::SalcController(SalcParams params, Stage stage, double initial_threshold)
    : params_(params), stage_(stage), window_(params.tw), threshold_(initial_threshold) {
  params_.validate();
  if (initial_threshold < params_.threshold_floor || initial_threshold > params_.threshold_cap) {
    throw ParameterError("initial threshold outside [floor, cap]");
  }
}

SalcController::SalcController(const SalcController& other)
    : params_(other.params_),
      stage_(other.stage_),
      window_(other.window_),
      threshold_(other.threshold()) {}

SalcController& SalcController::operator=(const SalcController& other) {
  if (this != &other) {
    params_ = other.params_;
    stage_ = other.stage_;
    window_ = other.window_;
    threshold_.store(other.threshold(), std::memory_order_release);
  }
  return *this;
}

double SalcController::update(double now) {
  const double next = salc_update({threshold(), stage_}, params_, window_, now);
  threshold_.store(next, std::memory_order_release);
  return next;
}

}  // namespace brownout
