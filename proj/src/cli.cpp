#include "brownout/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "brownout/brownout_router.hpp"
#include "brownout/csv.hpp"
#include "brownout/error.hpp"
#include "brownout/experiment.hpp"
#include "brownout/layer_io.hpp"
#include "brownout/queue_analytics.hpp"
#include "brownout/serve_sim.hpp"
#include "brownout/trace_analysis.hpp"
#include "brownout/united_distill.hpp"

namespace brownout::cli {

namespace {

using nlohmann::json;

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> counts;
  for (const auto& f : split_csv_line(text)) {
    if (f.empty()) throw ParameterError("empty entry in --counts");
    try {
      counts.push_back(parse_size(f, 1));
    } catch (const FormatError&) {
      throw ParameterError("--counts entries must be nonnegative integers; got '" + f + "'");
    }
  }
  return counts;
}

json executor_json(const Executor& e) {
  return {{"kind", e.kind == Executor::Kind::kOriginal ? "original" : "united"}, {"id", e.id}};
}

json plan_json(const RoutingPlan& plan, std::size_t m) {
  json s1 = json::array();
  for (const auto& a : plan.s1) s1.push_back({{"expert", a.expert_id}, {"tokens", a.token_count}});
  json groups = json::array();
  for (const auto& g : plan.s2_groups) {
    groups.push_back({{"group", g.group_id},
                      {"executor", executor_json(g.executor)},
                      {"members", g.member_expert_ids},
                      {"tokens", g.token_count()}});
  }
  json dropped = json::array();
  for (const auto& d : plan.dropped) {
    dropped.push_back({{"expert", d.expert_id}, {"tokens", d.token_indices.size()}});
  }
  const PlanStats st = plan_stats(plan, m);
  return {{"total_tokens", plan.total_tokens},
          {"coverage_target", plan.coverage_target},
          {"s1", s1},
          {"s2_groups", groups},
          {"dropped", dropped},
          {"stats",
           {{"experts_accessed", st.experts_accessed},
            {"tokens_via_originals", st.tokens_via_originals},
            {"tokens_via_united", st.tokens_via_united},
            {"tokens_dropped", st.tokens_dropped},
            {"access_fraction", st.access_fraction}}}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::setprecision(4) << *v;
  return os.str();
}

// --- route ---------------------------------------------------------------

struct RouteArgs {
  std::string counts;
  std::size_t m = 0;
  std::size_t k = 1;
  double threshold = 1.0;
  std::string strategy = "partial";
};

int cmd_route(const RouteArgs& a, std::ostream& out) {
  const auto counts = parse_counts(a.counts);
  if (a.m != 0 && a.m != counts.size()) {
    throw ParameterError("--m=" + std::to_string(a.m) + " but --counts lists " +
                         std::to_string(counts.size()) + " experts");
  }
  BrownoutConfig cfg;
  cfg.way = a.k;
  cfg.threshold = a.strategy == "zero" ? 1.0 : a.threshold;
  cfg.use_full_brownout = a.strategy == "full";
  const RoutingPlan plan = plan_brownout(counts, cfg);
  json doc = plan_json(plan, counts.size());
  doc["m"] = counts.size();
  doc["k"] = a.k;
  doc["threshold"] = cfg.threshold;
  doc["strategy"] = a.strategy;
  out << doc.dump(2) << '\n';
  return kExitOk;
}

// --- distill -------------------------------------------------------------

struct DistillArgs {
  std::string layer_in;
  std::string layer_out = "layer_distilled.json";
  std::string report_out = "distill_report.json";
  std::string tokens_file;
  std::size_t tokens = 256;
  LayerShape shape;
  std::uint64_t layer_seed = 0;
  DistillConfig cfg;
};

std::vector<HiddenVector> load_tokens(const std::string& path, std::size_t d) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open token file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("token file '" + path + "': " + e.what());
  }
  std::vector<HiddenVector> tokens;
  try {
    tokens = doc.get<std::vector<HiddenVector>>();
  } catch (const json::exception&) {
    throw FormatError("token file '" + path + "' must be an array of number arrays");
  }
  for (const auto& t : tokens) {
    if (t.size() != d) throw ShapeError("token file vectors must have dimension " + std::to_string(d));
  }
  return tokens;
}

int cmd_distill(const DistillArgs& a, std::ostream& out) {
  MoELayer layer = a.layer_in.empty() ? make_random_layer(a.shape, a.layer_seed) : load_layer(a.layer_in);
  const auto tokens = a.tokens_file.empty() ? synthetic_tokens(a.tokens, layer.d, a.cfg.seed)
                                            : load_tokens(a.tokens_file, layer.d);
  auto [distilled, reports] = distill_layer(std::move(layer), tokens, a.cfg);
  save_layer(distilled, a.layer_out);

  json rep = json::array();
  for (const auto& r : reports) {
    json curve = json::array();
    for (const auto& p : r.loss_curve) curve.push_back({p.epoch, p.loss});
    rep.push_back({{"group_id", r.group_id},
                   {"members", r.member_expert_ids},
                   {"initial_loss", r.initial_loss},
                   {"final_loss", r.final_loss},
                   {"lower_bound", r.lower_bound},
                   {"loss_curve", curve}});
  }
  write_text(a.report_out,
             json{{"learning_rate", a.cfg.learning_rate},
                  {"epochs", a.cfg.epochs},
                  {"batch_size", a.cfg.batch_size},
                  {"seed", a.cfg.seed},
                  {"tokens", tokens.size()},
                  {"groups", rep}}
                     .dump(2) +
                 "\n");
  for (const auto& r : reports) {
    out << "group " << r.group_id << ": loss " << r.initial_loss << " -> " << r.final_loss
        << " (floor " << r.lower_bound << ")\n";
  }
  out << "wrote " << a.layer_out << " and " << a.report_out << '\n';
  return kExitOk;
}

// --- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out_dir = ".";
  std::string trace_out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const Experiment ex = load_experiment(a.config);
  const SimResult res = run_simulation(ex.trace, ex.sim, ex.layer);

  const std::filesystem::path dir(a.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
  {
    std::ostringstream os;
    write_records_csv(os, res.records);
    write_text(dir / "records.csv", os.str());
  }
  {
    std::ostringstream os;
    write_thresholds_csv(os, res.thresholds);
    write_text(dir / "thresholds.csv", os.str());
  }
  write_text(dir / "report.json", report_to_json(res.report).dump(2) + "\n");
  if (!a.trace_out.empty()) {
    std::ostringstream os;
    write_trace_csv(os, ex.trace);
    write_text(a.trace_out, os.str());
  }

  const SimReport& r = res.report;
  out << "requests " << r.requests_completed << "/" << r.requests_total << " completed, "
      << r.tokens_emitted << " tokens, throughput " << std::setprecision(4) << r.throughput
      << " tok/s\n";
  out << "prefill P90 " << fmt_opt(r.prefill.p90) << " s, violation " << r.prefill.violation_rate
      << "\n";
  out << "decode  P90 " << fmt_opt(r.decode.p90) << " s, violation " << r.decode.violation_rate
      << "\n";
  return kExitOk;
}

// --- analyze -------------------------------------------------------------

struct AnalyzeArgs {
  std::string records;
  double prefill_slo = 0.25;
  double decode_slo = 0.15;
  double bucket = 1.0;
  std::string series_out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  std::ifstream in(a.records);
  if (!in) throw IoError("cannot open records '" + a.records + "'");
  const auto records = read_records_csv(in);
  const TraceAnalysis analysis = analyze_records(records, a.prefill_slo, a.decode_slo, a.bucket);
  if (!a.series_out.empty()) {
    std::ostringstream os;
    os << "t_s,stage,count,p90_s\n";
    for (Stage s : {Stage::kPrefill, Stage::kDecode}) {
      const auto& st = s == Stage::kPrefill ? analysis.prefill : analysis.decode;
      for (const auto& p : st.p90_series) {
        os << format_real(p.start) << ',' << to_string(s) << ',' << p.count << ','
           << format_real(p.p90) << '\n';
      }
    }
    write_text(a.series_out, os.str());
  }
  out << analysis_to_json(analysis).dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MoE brownout serving simulator"};
  app.require_subcommand(1);

  RouteArgs route;
  auto* route_cmd = app.add_subcommand("route", "Plan one MoE layer invocation from expert loads");
  route_cmd->add_option("--counts", route.counts, "Comma-separated token count per expert")->required();
  route_cmd->add_option("--m", route.m, "Number of experts (defaults to the counts length)");
  route_cmd->add_option("--k", route.k, "Experts per united group")->check(CLI::PositiveNumber);
  route_cmd->add_option("--threshold", route.threshold, "Fraction of tokens kept on originals");
  route_cmd->add_option("--strategy", route.strategy, "zero | partial | full")
      ->check(CLI::IsMember({"zero", "partial", "full"}));

  DistillArgs distill;
  auto* distill_cmd = app.add_subcommand("distill", "Train united experts for a layer");
  distill_cmd->add_option("--layer", distill.layer_in, "Layer JSON (omit to generate a random layer)");
  distill_cmd->add_option("--out", distill.layer_out, "Output layer JSON");
  distill_cmd->add_option("--report", distill.report_out, "Output loss report JSON");
  distill_cmd->add_option("--tokens-file", distill.tokens_file, "JSON array of training vectors");
  distill_cmd->add_option("--tokens", distill.tokens, "Synthetic training token count");
  distill_cmd->add_option("--lr", distill.cfg.learning_rate);
  distill_cmd->add_option("--epochs", distill.cfg.epochs);
  distill_cmd->add_option("--batch-size", distill.cfg.batch_size);
  distill_cmd->add_option("--seed", distill.cfg.seed);
  distill_cmd->add_option("--d", distill.shape.d, "Random layer: model dimension");
  distill_cmd->add_option("--hidden", distill.shape.h, "Random layer: expert hidden dimension");
  distill_cmd->add_option("--m", distill.shape.m, "Random layer: routed experts");
  distill_cmd->add_option("--k", distill.shape.k, "Random layer: experts per group");
  distill_cmd->add_option("--top-k", distill.shape.top_k, "Random layer: gate top-K");
  distill_cmd->add_option("--n-shared", distill.shape.n_shared, "Random layer: shared experts");
  distill_cmd->add_option("--layer-seed", distill.layer_seed, "Random layer: weight seed");

  SimulateArgs simulate;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a serving simulation from a JSON config");
  sim_cmd->add_option("--config", simulate.config)->required();
  sim_cmd->add_option("--out", simulate.out_dir, "Directory for records.csv, thresholds.csv, report.json");
  sim_cmd->add_option("--trace-out", simulate.trace_out, "Also write the replayed trace as CSV");

  MD1Params md1;
  auto* md1_cmd = app.add_subcommand("md1", "Mean M/D/1 response time");
  md1_cmd->add_option("--lambda", md1.lambda)->required();
  md1_cmd->add_option("--tau", md1.tau)->required();

  SpeedupQuery speedup;
  auto* speedup_cmd = app.add_subcommand("speedup", "Amdahl speedup");
  speedup_cmd->add_option("--alpha", speedup.alpha)->required();
  speedup_cmd->add_option("--k", speedup.k_factor)->required();

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Summarize a records.csv file");
  analyze_cmd->add_option("--records", analyze.records)->required();
  analyze_cmd->add_option("--prefill-slo", analyze.prefill_slo);
  analyze_cmd->add_option("--decode-slo", analyze.decode_slo);
  analyze_cmd->add_option("--bucket", analyze.bucket, "P90 series bucket width, seconds");
  analyze_cmd->add_option("--series-out", analyze.series_out, "Write the P90 series as CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (route_cmd->parsed()) return cmd_route(route, out);
    if (distill_cmd->parsed()) return cmd_distill(distill, out);
    if (sim_cmd->parsed()) return cmd_simulate(simulate, out);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze, out);
    if (md1_cmd->parsed()) {
      out << std::setprecision(17) << md1_response_time(md1) << '\n';
      return kExitOk;
    }
    if (speedup_cmd->parsed()) {
      out << std::setprecision(17) << amdahl_speedup(speedup) << '\n';
      return kExitOk;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace brownout::cli
