#include "brownout/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "brownout/csv.hpp"
#include "brownout/error.hpp"

namespace brownout {

void RateSchedule::validate() const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (!(s.start >= 0.0) || !(s.start < s.end) || !std::isfinite(s.end)) {
      throw ParameterError("rate segment " + std::to_string(i) + " must satisfy 0 <= start < end");
    }
    if (!(s.rps >= 0.0) || !std::isfinite(s.rps)) {
      throw ParameterError("rate segment " + std::to_string(i) + " has invalid rps");
    }
    if (i > 0 && s.start != segments[i - 1].end) {
      throw ParameterError("rate segments must be contiguous (segment " + std::to_string(i) +
                           " starts at " + std::to_string(s.start) + ")");
    }
  }
}

double RateSchedule::expected_count() const {
  double n = 0.0;
  for (const auto& s : segments) n += (s.end - s.start) * s.rps;
  return n;
}

RateSchedule RateSchedule::burst(double base_rps, double burst_at, double end, double factor) {
  RateSchedule r;
  r.segments.push_back({0.0, burst_at, base_rps});
  r.segments.push_back({burst_at, end, base_rps * factor});
  r.validate();
  return r;
}

LengthDistribution LengthDistribution::constant(std::size_t value) {
  if (value < 1) throw ParameterError("constant length must be at least 1");
  LengthDistribution d;
  d.kind_ = Kind::kConstant;
  d.a_ = static_cast<double>(value);
  return d;
}

LengthDistribution LengthDistribution::uniform(std::size_t lo, std::size_t hi) {
  if (lo < 1 || hi < lo) throw ParameterError("uniform length needs 1 <= lo <= hi");
  LengthDistribution d;
  d.kind_ = Kind::kUniform;
  d.a_ = static_cast<double>(lo);
  d.b_ = static_cast<double>(hi);
  return d;
}

LengthDistribution LengthDistribution::lognormal(double median, double sigma) {
  if (!(median > 0.0) || !(sigma >= 0.0)) {
    throw ParameterError("lognormal length needs median > 0 and sigma >= 0");
  }
  LengthDistribution d;
  d.kind_ = Kind::kLognormal;
  d.a_ = std::log(median);
  d.b_ = sigma;
  return d;
}

LengthDistribution LengthDistribution::empirical(std::vector<std::size_t> values) {
  if (values.empty()) throw ParameterError("empirical length distribution is empty");
  if (std::find(values.begin(), values.end(), 0u) != values.end()) {
    throw ParameterError("empirical lengths must be positive");
  }
  LengthDistribution d;
  d.kind_ = Kind::kEmpirical;
  d.values_ = std::move(values);
  return d;
}

LengthDistribution LengthDistribution::empirical_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open length file '" + path + "'");
  std::vector<std::size_t> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string field = trim(line);
    if (field.empty()) continue;
    values.push_back(parse_size(field, line_no));
  }
  return empirical(std::move(values));
}

LengthDistribution LengthDistribution::alpaca_like_input() { return lognormal(20.0, 0.7); }
LengthDistribution LengthDistribution::alpaca_like_output() { return lognormal(60.0, 0.7); }
LengthDistribution LengthDistribution::sharegpt_like_input() { return lognormal(20.0 * 4.3, 0.9); }
LengthDistribution LengthDistribution::sharegpt_like_output() { return lognormal(60.0 * 13.7, 0.6); }

std::size_t LengthDistribution::sample(std::mt19937_64& rng, std::size_t max_len) const {
  if (max_len < 1) throw ParameterError("max_len must be at least 1");
  double raw = 1.0;
  switch (kind_) {
    case Kind::kConstant:
      raw = a_;
      break;
    case Kind::kUniform: {
      std::uniform_int_distribution<std::size_t> u(static_cast<std::size_t>(a_),
                                                   static_cast<std::size_t>(b_));
      raw = static_cast<double>(u(rng));
      break;
    }
    case Kind::kLognormal: {
      std::lognormal_distribution<double> ln(a_, b_);
      raw = std::round(ln(rng));
      break;
    }
    case Kind::kEmpirical: {
      std::uniform_int_distribution<std::size_t> pick(0, values_.size() - 1);
      raw = static_cast<double>(values_[pick(rng)]);
      break;
    }
  }
  raw = std::clamp(raw, 1.0, static_cast<double>(max_len));
  return static_cast<std::size_t>(raw);
}

std::vector<Request> generate_trace(const RateSchedule& schedule, const LengthDistribution& in_dist,
                                    const LengthDistribution& out_dist, std::uint64_t seed,
                                    std::size_t max_seq_len) {
  schedule.validate();
  if (max_seq_len < 2) throw ParameterError("max_seq_len must allow one input and one output token");
  std::mt19937_64 arrivals(seed);
  // Lengths use their own stream so the arrival process does not depend on
  // the length profiles.
  std::mt19937_64 lengths(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Request> trace;
  for (const auto& seg : schedule.segments) {
    if (seg.rps == 0.0) continue;
    std::exponential_distribution<double> gap(seg.rps);
    // Exponential gaps are memoryless, so each segment restarts at its start.
    double t = seg.start;
    while (true) {
      t += gap(arrivals);
      if (t >= seg.end) break;
      Request r;
      r.id = trace.size();
      r.arrival_time = t;
      r.input_len = in_dist.sample(lengths, max_seq_len - 1);
      r.output_len = out_dist.sample(lengths, max_seq_len - r.input_len);
      trace.push_back(r);
    }
  }
  return trace;
}

void write_trace_csv(std::ostream& os, const std::vector<Request>& trace) {
  os << "id,arrival_time,input_len,output_len\n";
  for (const auto& r : trace) {
    os << r.id << ',' << format_real(r.arrival_time) << ',' << r.input_len << ',' << r.output_len
       << '\n';
  }
}

std::vector<Request> read_trace_csv(std::istream& is) {
  std::vector<Request> trace;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  double last = 0.0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (trim(line) != "id,arrival_time,input_len,output_len") {
        throw FormatError("trace CSV line 1: unexpected header '" + line + "'");
      }
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw FormatError("trace CSV line " + std::to_string(line_no) + ": expected 4 fields, got " +
                        std::to_string(fields.size()));
    }
    Request r;
    r.id = parse_size(fields[0], line_no);
    r.arrival_time = parse_real(fields[1], line_no);
    r.input_len = parse_size(fields[2], line_no);
    r.output_len = parse_size(fields[3], line_no);
    if (r.input_len < 1 || r.output_len < 1) {
      throw FormatError("trace CSV line " + std::to_string(line_no) + ": lengths must be positive");
    }
    if (r.arrival_time < last) {
      throw FormatError("trace CSV line " + std::to_string(line_no) + ": arrivals out of order");
    }
    last = r.arrival_time;
    trace.push_back(r);
  }
  return trace;
}

}  // namespace brownout
