// cascadeserve: gen-synthetic, gen-trace, plan, simulate, serve, report.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <algorithm>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cascadeserve/io.hpp"
#include "cascadeserve/metrics.hpp"
#include "cascadeserve/planner.hpp"
#include "cascadeserve/serving.hpp"
#include "cascadeserve/sim_engine.hpp"
#include "cascadeserve/synthetic.hpp"
#include "cascadeserve/workload.hpp"

namespace fs = std::filesystem;
using namespace cascadeserve;
using json = nlohmann::json;

namespace {

constexpr int kExitSloViolated = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitBadInput = 3;

std::atomic<bool> g_interrupted{false};

void on_sigint(int) { g_interrupted = true; }

struct GenSyntheticArgs {
  SyntheticSpec spec;
  std::string out_dir = ".";
  int devices = 0;
  double device_memory_gb = 16.0;
};

struct GenTraceArgs {
  std::string kind = "zipf";
  std::string out = "trace.csv";
  double qps = 100.0;
  double qps_max = 1000.0;
  int seconds = 60;
  int n_ranges = 8;
  double zipf_s = 1.1;
  std::vector<std::string> steps;  // "qps:seconds"
  std::uint64_t seed = 0;
};

struct PlanArgs {
  std::string profiles, validation, devices;
  std::optional<double> latency_slo_ms;
  std::optional<double> accuracy_slo;
  double qps_max = 0.0;
  int n_ranges = 8;
  double zipf_s = 1.1;
  std::uint64_t seed = 0;
  int samples = 2000;
  bool restricted = false;
  bool literal_prune_utility = false;
  std::string out = "plan.json";
  std::string log = "planning.jsonl";
};

struct RunArgs {
  std::string plan, profiles, validation, trace;
  std::optional<double> scale_qps;
  double alpha = 8.0;
  double measure_period_ms = 100.0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string metrics_out;
  double drain_timeout_s = 30.0;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string csv_out;
  std::string timeline_out;
};

int gen_synthetic(const GenSyntheticArgs& a) {
  SyntheticSpec spec = a.spec;
  if (spec.size_ratios.size() != static_cast<std::size_t>(spec.n_models)) {
    // Default ratios: powers of four.
    spec.size_ratios.clear();
    double r = 1.0;
    for (int i = 0; i < spec.n_models; ++i, r *= 4.0) spec.size_ratios.push_back(r);
  }
  const auto w = generate_synthetic(spec);
  const fs::path dir(a.out_dir);
  save_profiles(w.profiles, dir / "profiles.json");
  save_validation(w.validation, dir / "validation.jsonl");
  if (a.devices > 0) {
    save_devices(uniform_devices(a.devices, static_cast<std::int64_t>(
                                                a.device_memory_gb * (1LL << 30))),
                 dir / "devices.json");
  }
  std::cout << "wrote " << (dir / "profiles.json").string() << " and "
            << (dir / "validation.jsonl").string() << "\n";
  for (const auto& m : w.profiles.models()) {
    std::printf("  %-6s runtime(1)=%lldus accuracy=%.4f\n", m.model_id.c_str(),
                static_cast<long long>(m.runtime_us(1)), w.validation.model_accuracy(m.model_id));
  }
  return 0;
}

int gen_trace(const GenTraceArgs& a) {
  WorkloadTrace trace;
  if (a.kind == "constant") {
    trace = constant_rate_trace(a.qps, static_cast<Micros>(a.seconds) * kMicrosPerSecond);
  } else if (a.kind == "step") {
    std::vector<TraceSegment> segs;
    for (const auto& s : a.steps) {
      const auto colon = s.find(':');
      if (colon == std::string::npos) throw ValidationError("step must look like qps:seconds");
      segs.push_back({std::stod(s.substr(0, colon)),
                      static_cast<Micros>(std::stod(s.substr(colon + 1)) * kMicrosPerSecond)});
    }
    trace = step_trace(segs);
  } else if (a.kind == "zipf") {
    trace = zipf_trace(zipf_distribution(a.n_ranges, a.zipf_s), a.qps_max, a.seconds, a.seed)
                .trace;
  } else {
    throw ValidationError("unknown trace kind " + a.kind);
  }
  save_trace(trace, a.out);
  std::cout << "wrote " << trace.size() << " arrivals to " << a.out << "\n";
  return 0;
}

int plan_cmd(const PlanArgs& a) {
  if (a.latency_slo_ms.has_value() == a.accuracy_slo.has_value()) {
    throw ValidationError("give exactly one of --latency-slo-ms and --accuracy-slo");
  }
  const ProfileSet profiles = load_profiles(a.profiles);
  const ValidationSet validation = load_validation(a.validation);
  const auto devices = load_devices(a.devices);
  const Slo slo = a.latency_slo_ms
                      ? Slo::latency(static_cast<Micros>(*a.latency_slo_ms * 1000.0))
                      : Slo::accuracy(*a.accuracy_slo);
  PlannerConfig cfg;
  cfg.n_samples = a.samples;
  cfg.restricted = a.restricted;
  cfg.literal_prune_utility = a.literal_prune_utility;

  PlannerStats stats;
  auto write_log = [&] {
    std::string text;
    for (const auto& e : stats.log) {
      json j = {{"iteration", e.iteration},
                {"submodule", e.submodule},
                {"error_code", e.error_code},
                {"plan_hash", e.plan_hash}};
      if (e.qps_range_index) j["qps_range_index"] = *e.qps_range_index;
      if (e.bottleneck_model) j["bottleneck_model"] = *e.bottleneck_model;
      text += j.dump() + "\n";
    }
    json summary = {{"summary", true},
                    {"submodule_calls", stats.submodule_calls},
                    {"calls_by_submodule", stats.calls_by_submodule},
                    {"downgrades", stats.downgrades},
                    {"candidates", stats.candidate_count},
                    {"wall_seconds", stats.wall_seconds}};
    text += summary.dump() + "\n";
    write_file(a.log, text);
  };

  try {
    const GearPlan plan = optimize(profiles, devices, validation,
                                   zipf_distribution(a.n_ranges, a.zipf_s), slo, a.qps_max,
                                   a.n_ranges, a.seed, cfg, &stats);
    save_plan(plan, a.out);
    write_log();
    std::printf("plan written to %s (%d submodule calls, %.2fs)\n", a.out.c_str(),
                stats.submodule_calls, stats.wall_seconds);
    return 0;
  } catch (const UserInfeasible& e) {
    write_log();
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  }
}

struct Inputs {
  GearPlan plan;
  ProfileSet profiles;
  ValidationSet validation;
  WorkloadTrace trace;
};

Inputs load_inputs(const RunArgs& a) {
  Inputs in;
  in.profiles = load_profiles(a.profiles);
  in.validation = load_validation(a.validation);
  in.plan = load_plan(a.plan);
  in.plan.validate(in.profiles);
  in.validation.check_covers(in.profiles);
  in.trace = load_trace(a.trace, a.scale_qps);
  return in;
}

int finish_run(const RunArgs& a, const Inputs& in, const SimMetrics& m) {
  if (!a.out_dir.empty()) write_run_outputs(a.out_dir, m, in.plan);
  if (!a.metrics_out.empty()) write_file(a.metrics_out, windows_csv(sliding_windows(m)));
  const RunSummary s = summarize(m, in.plan, a.out_dir.empty() ? "run" : fs::path(a.out_dir).filename().string());
  std::cout << report_table({s});
  if (in.plan.slo.is_latency() && !s.slo_met) {
    std::cerr << "latency SLO violated: p95 " << *s.p95_latency_us << "us > "
              << in.plan.slo.latency_target_us << "us\n";
    return kExitSloViolated;
  }
  return 0;
}

int simulate_cmd(const RunArgs& a) {
  const Inputs in = load_inputs(a);
  RunOptions ro;
  ro.engine.alpha = a.alpha;
  ro.engine.measure_period_us = static_cast<Micros>(a.measure_period_ms * 1000.0);
  ro.engine.seed = a.seed;
  ro.engine.record_batches = false;
  ro.drain_limit_us = static_cast<Micros>(a.drain_timeout_s * kMicrosPerSecond);
  return finish_run(a, in, run(in.plan, in.trace, in.validation, in.profiles, ro));
}

int serve_cmd(const RunArgs& a) {
  const Inputs in = load_inputs(a);
  ServerConfig sc;
  sc.alpha = a.alpha;
  sc.measure_period_us = static_cast<Micros>(a.measure_period_ms * 1000.0);
  sc.seed = a.seed;
  Server server(in.plan, in.profiles, in.validation, sc);
  std::signal(SIGINT, on_sigint);
  server.start();
  for (std::size_t k = 0; k < in.trace.arrivals.size() && !g_interrupted; ++k) {
    const Micros wait = in.trace.arrivals[k] - server.now();
    if (wait > 0) {
      sleep_until_precise(std::chrono::steady_clock::now() + std::chrono::microseconds(wait));
    }
    server.submit(static_cast<std::int64_t>(k));
  }
  while (!g_interrupted && server.now() < in.trace.duration_us) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  const bool drained =
      server.stop(g_interrupted ? kMicrosPerSecond
                                : static_cast<Micros>(a.drain_timeout_s * kMicrosPerSecond));
  if (!drained) std::cerr << "warning: requests still queued at shutdown\n";
  return finish_run(a, in, server.metrics());
}

std::vector<fs::path> find_summaries(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().filename() == "metrics.json") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

int report_cmd(const ReportArgs& a) {
  std::vector<RunSummary> runs;
  std::string timeline = "run,time_us,from_gear,to_gear,measured_qps,q0\n";
  for (const auto& path : find_summaries(a.inputs)) {
    RunSummary s = parse_summary(read_file(path));
    if (s.name.empty() || s.name == "run") s.name = path.parent_path().filename().string();
    const fs::path gears = path.parent_path() / "gears.csv";
    if (fs::exists(gears)) {
      std::istringstream is(read_file(gears));
      std::string line;
      std::getline(is, line);
      while (std::getline(is, line)) {
        if (!line.empty()) timeline += s.name + "," + line + "\n";
      }
    }
    runs.push_back(std::move(s));
  }
  if (runs.empty()) throw ValidationError("no metrics.json found in the given inputs");
  std::cout << report_table(runs);
  if (!a.csv_out.empty()) write_file(a.csv_out, report_csv(runs));
  if (!a.timeline_out.empty()) write_file(a.timeline_out, timeline);
  return 0;
}

void add_run_flags(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--plan", a.plan, "plan.json")->required()->check(CLI::ExistingFile);
  cmd->add_option("--profiles", a.profiles, "profiles.json")->required()->check(CLI::ExistingFile);
  cmd->add_option("--validation", a.validation, "validation.jsonl")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--trace", a.trace, "trace.csv")->required()->check(CLI::ExistingFile);
  cmd->add_option("--scale-qps", a.scale_qps, "rescale the trace so its busiest second has this QPS");
  cmd->add_option("--alpha", a.alpha, "gear-switch hysteresis factor")->capture_default_str();
  cmd->add_option("--measure-period-ms", a.measure_period_ms, "QPS measurement period")
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "routing seed")->capture_default_str();
  cmd->add_option("--out-dir", a.out_dir,
                  "write metrics.json, requests.csv, windows.csv, gears.csv here");
  cmd->add_option("--metrics-out", a.metrics_out, "sliding-window metrics CSV");
  cmd->add_option("--drain-timeout-s", a.drain_timeout_s, "drain limit after the trace ends")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascade serving: gear planning, simulation and mock serving"};
  app.require_subcommand(1);

  GenSyntheticArgs gs;
  gs.spec.size_ratios.clear();
  auto* c_gen = app.add_subcommand("gen-synthetic", "emit a mock model zoo");
  c_gen->add_option("--out-dir", gs.out_dir)->capture_default_str();
  c_gen->add_option("--models", gs.spec.n_models)->capture_default_str();
  c_gen->add_option("--ratios", gs.spec.size_ratios, "cost ratio per model, cheapest first");
  c_gen->add_option("--easy-fraction", gs.spec.easy_fraction)->capture_default_str();
  c_gen->add_option("--samples", gs.spec.n_samples)->capture_default_str();
  c_gen->add_option("--classes", gs.spec.n_classes)->capture_default_str();
  c_gen->add_option("--base-runtime-us", gs.spec.base_runtime_us)->capture_default_str();
  c_gen->add_option("--base-memory-bytes", gs.spec.base_memory_bytes)->capture_default_str();
  c_gen->add_option("--max-batch", gs.spec.max_batch)->capture_default_str();
  c_gen->add_option("--seed", gs.spec.seed)->capture_default_str();
  c_gen->add_option("--devices", gs.devices, "also write devices.json with this many devices");
  c_gen->add_option("--device-memory-gb", gs.device_memory_gb)->capture_default_str();

  GenTraceArgs gt;
  auto* c_trace = app.add_subcommand("gen-trace", "emit an arrival trace");
  c_trace->add_option("--kind", gt.kind, "constant, step or zipf")
      ->check(CLI::IsMember({"constant", "step", "zipf"}))
      ->capture_default_str();
  c_trace->add_option("--out", gt.out)->capture_default_str();
  c_trace->add_option("--qps", gt.qps, "rate of a constant trace")->capture_default_str();
  c_trace->add_option("--qps-max", gt.qps_max, "top of the zipf ranges")->capture_default_str();
  c_trace->add_option("--seconds", gt.seconds)->capture_default_str();
  c_trace->add_option("--n-ranges", gt.n_ranges)->capture_default_str();
  c_trace->add_option("--zipf-s", gt.zipf_s)->capture_default_str();
  c_trace->add_option("--step", gt.steps, "qps:seconds, repeatable");
  c_trace->add_option("--seed", gt.seed)->capture_default_str();

  PlanArgs pa;
  auto* c_plan = app.add_subcommand("plan", "compute a gear plan");
  c_plan->add_option("--profiles", pa.profiles)->required()->check(CLI::ExistingFile);
  c_plan->add_option("--validation", pa.validation)->required()->check(CLI::ExistingFile);
  c_plan->add_option("--devices", pa.devices)->required()->check(CLI::ExistingFile);
  c_plan->add_option("--latency-slo-ms", pa.latency_slo_ms, "p95 latency target");
  c_plan->add_option("--accuracy-slo", pa.accuracy_slo, "plan accuracy target");
  c_plan->add_option("--qps-max", pa.qps_max)->required()->check(CLI::PositiveNumber);
  c_plan->add_option("--n-ranges", pa.n_ranges)->capture_default_str()->check(CLI::PositiveNumber);
  c_plan->add_option("--zipf-s", pa.zipf_s)->capture_default_str();
  c_plan->add_option("--seed", pa.seed)->capture_default_str();
  c_plan->add_option("--samples", pa.samples, "cascades sampled per search")->capture_default_str();
  c_plan->add_flag("--restricted", pa.restricted, "max replication, batch 1");
  c_plan->add_flag("--literal-prune-utility", pa.literal_prune_utility,
                   "score pruning by remaining overallocation");
  c_plan->add_option("--out", pa.out)->capture_default_str();
  c_plan->add_option("--log", pa.log, "planning log, JSON lines")->capture_default_str();

  RunArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "replay a trace in virtual time");
  add_run_flags(c_sim, sim);

  RunArgs srv;
  auto* c_srv = app.add_subcommand("serve", "replay a trace against the wall-clock server");
  add_run_flags(c_srv, srv);

  ReportArgs ra;
  auto* c_rep = app.add_subcommand("report", "summarize metrics.json files or run directories");
  c_rep->add_option("inputs", ra.inputs)->required();
  c_rep->add_option("--csv-out", ra.csv_out, "summary table as CSV");
  c_rep->add_option("--timeline-out", ra.timeline_out, "merged gear timeline CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitBadInput;
  }

  try {
    if (*c_gen) return gen_synthetic(gs);
    if (*c_trace) return gen_trace(gt);
    if (*c_plan) return plan_cmd(pa);
    if (*c_sim) return simulate_cmd(sim);
    if (*c_srv) return serve_cmd(srv);
    if (*c_rep) return report_cmd(ra);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  return 0;
}
