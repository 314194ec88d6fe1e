#pragma once

// Synthetic request streams: Poisson arrivals under a piecewise-constant rate
// schedule, with prompt/output lengths drawn from simple distributions.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace brownout {

inline constexpr std::size_t kDefaultMaxSeqLen = 2048;

struct RateSegment {
  double start = 0.0;  // seconds
  double end = 0.0;
  double rps = 0.0;
};

struct RateSchedule {
  std::vector<RateSegment> segments;

  /// Segments must be contiguous with start < end and rps >= 0.
  void validate() const;
  double expected_count() const;

  /// Base rate until `burst_at`, then `factor` times the base rate until `end`.
  static RateSchedule burst(double base_rps, double burst_at, double end, double factor = 2.0);
};

class LengthDistribution {
 public:
  enum class Kind { kConstant, kUniform, kLognormal, kEmpirical };

  static LengthDistribution constant(std::size_t value);
  static LengthDistribution uniform(std::size_t lo, std::size_t hi);
  static LengthDistribution lognormal(double median, double sigma);
  static LengthDistribution empirical(std::vector<std::size_t> values);
  /// One positive integer per line; blank lines and '#' comments are skipped.
  static LengthDistribution empirical_from_file(const std::string& path);

  /// Short prompts and answers (median about 20 in, 60 out).
  static LengthDistribution alpaca_like_input();
  static LengthDistribution alpaca_like_output();
  /// About 4.3x longer prompts and 13.7x longer answers than the alpaca-like profile.
  static LengthDistribution sharegpt_like_input();
  static LengthDistribution sharegpt_like_output();

  /// Draws a length clamped to [1, max_len].
  std::size_t sample(std::mt19937_64& rng, std::size_t max_len) const;

  Kind kind() const { return kind_; }

 private:
  Kind kind_ = Kind::kConstant;
  double a_ = 1.0;
  double b_ = 1.0;
  std::vector<std::size_t> values_;
};

struct Request {
  std::size_t id = 0;
  double arrival_time = 0.0;
  std::size_t input_len = 1;
  std::size_t output_len = 1;

  friend bool operator==(const Request&, const Request&) = default;
};

/// Exponential inter-arrivals at each segment's rate; time-ordered; fully
/// determined by `seed`. input_len + output_len never exceeds max_seq_len.
std::vector<Request> generate_trace(const RateSchedule& schedule, const LengthDistribution& in_dist,
                                    const LengthDistribution& out_dist, std::uint64_t seed,
                                    std::size_t max_seq_len = kDefaultMaxSeqLen);

/// CSV with header `id,arrival_time,input_len,output_len`.
void write_trace_csv(std::ostream& os, const std::vector<Request>& trace);
std::vector<Request> read_trace_csv(std::istream& is);

}  // namespace brownout
