#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascadeserve/domain.hpp"
#include "cascadeserve/sim_engine.hpp"

namespace cascadeserve {

struct WindowConfig {
  Micros span_us = 5 * kMicrosPerSecond;
  Micros stride_us = kMicrosPerSecond;
};

/// One sliding window, ending at window_end_us. Latency and accuracy cover
/// requests that completed inside the window; measured_qps counts arrivals.
struct WindowedMetrics {
  Micros window_start_us = 0;
  Micros window_end_us = 0;
  std::int64_t completed = 0;
  std::optional<Micros> p95_latency_us;
  std::optional<double> accuracy;
  int gear_index = 0;
  double measured_qps = 0.0;
};

/// Windows end at every stride up to the run horizon.
std::vector<WindowedMetrics> sliding_windows(const SimMetrics& metrics,
                                             const WindowConfig& config = {},
                                             int initial_gear = 0);

std::string windows_csv(const std::vector<WindowedMetrics>& windows);
/// One row per completed request.
std::string requests_csv(const SimMetrics& metrics);
/// One row per gear switch.
std::string gear_timeline_csv(const SimMetrics& metrics);

/// Headline numbers of one run: cost in devices, latency and accuracy.
struct RunSummary {
  std::string name;
  int devices = 0;
  std::int64_t arrivals = 0;
  std::int64_t completed = 0;
  std::int64_t backlogged = 0;
  std::optional<Micros> p50_latency_us;
  std::optional<Micros> p95_latency_us;
  std::optional<Micros> p99_latency_us;
  std::optional<double> accuracy;
  std::int64_t gear_switches = 0;
  Micros horizon_us = 0;
  Slo slo;
  bool slo_met = true;
  std::map<std::string, std::map<int, std::int64_t>> per_model_batches;
  std::map<int, double> per_range_throughput;
};

/// A latency SLO is met when the run's p95 is at or under the target; an
/// accuracy SLO when the completed requests reach the target accuracy.
RunSummary summarize(const SimMetrics& metrics, const GearPlan& plan,
                     std::string name = "run");

std::string summary_json(const RunSummary& summary);
RunSummary parse_summary(const std::string& text);

/// Fixed-width table; rows sorted by accuracy, most accurate first.
std::string report_table(std::vector<RunSummary> runs);
std::string report_csv(std::vector<RunSummary> runs);

/// Writes metrics.json, requests.csv, windows.csv and gears.csv into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const SimMetrics& metrics,
                       const GearPlan& plan, const WindowConfig& windows = {});

}  // namespace cascadeserve
