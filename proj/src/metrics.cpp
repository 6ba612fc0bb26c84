#include "cascadeserve/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cascadeserve/io.hpp"

namespace cascadeserve {

using json = nlohmann::json;

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

std::string cell(const std::optional<Micros>& v) {
  return v ? std::to_string(*v) : std::string();
}

std::string cell(const std::optional<double>& v, const char* fmt = "%.6f") {
  if (!v) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

}  // namespace

std::vector<WindowedMetrics> sliding_windows(const SimMetrics& metrics,
                                             const WindowConfig& config,
                                             int initial_gear) {
  if (config.span_us <= 0 || config.stride_us <= 0) {
    throw Error("window span and stride must be positive");
  }
  std::vector<WindowedMetrics> out;
  const Micros horizon = std::max(metrics.horizon_us, metrics.trace_end_us);
  if (!metrics.measurements.empty()) initial_gear = metrics.measurements.front().gear_before;

  std::vector<const RequestRecord*> done;
  for (const auto& r : metrics.requests) {
    if (r.completed()) done.push_back(&r);
  }
  std::sort(done.begin(), done.end(), [](const auto* a, const auto* b) {
    return a->completion_us < b->completion_us;
  });

  std::vector<Micros> arrivals;
  arrivals.reserve(metrics.requests.size());
  for (const auto& r : metrics.requests) arrivals.push_back(r.arrival_us);
  std::sort(arrivals.begin(), arrivals.end());

  std::size_t gear_cursor = 0;
  int gear = initial_gear;
  for (Micros end = config.stride_us; end - config.stride_us < horizon;
       end += config.stride_us) {
    WindowedMetrics w;
    w.window_end_us = end;
    w.window_start_us = std::max<Micros>(0, end - config.span_us);
    while (gear_cursor < metrics.gear_events.size() &&
           metrics.gear_events[gear_cursor].time_us < end) {
      gear = metrics.gear_events[gear_cursor].to;
      ++gear_cursor;
    }
    w.gear_index = gear;

    auto lo = std::lower_bound(done.begin(), done.end(), w.window_start_us,
                               [](const auto* r, Micros t) { return r->completion_us < t; });
    auto hi = std::lower_bound(done.begin(), done.end(), end,
                               [](const auto* r, Micros t) { return r->completion_us < t; });
    std::vector<Micros> lat;
    std::int64_t correct = 0;
    for (auto it = lo; it != hi; ++it) {
      lat.push_back((*it)->latency_us());
      correct += (*it)->correct ? 1 : 0;
    }
    w.completed = static_cast<std::int64_t>(lat.size());
    if (!lat.empty()) {
      w.accuracy = static_cast<double>(correct) / static_cast<double>(lat.size());
      w.p95_latency_us = percentile(std::move(lat), 95.0);
    }

    const auto in_window =
        std::lower_bound(arrivals.begin(), arrivals.end(), end) -
        std::lower_bound(arrivals.begin(), arrivals.end(), w.window_start_us);
    w.measured_qps = static_cast<double>(in_window) /
                     (static_cast<double>(end - w.window_start_us) / kMicrosPerSecond);
    out.push_back(w);
  }
  return out;
}

std::string windows_csv(const std::vector<WindowedMetrics>& windows) {
  std::ostringstream os;
  os << "window_start_us,window_end_us,completed,p95_latency_us,accuracy,gear_index,"
        "measured_qps\n";
  for (const auto& w : windows) {
    os << w.window_start_us << ',' << w.window_end_us << ',' << w.completed << ','
       << cell(w.p95_latency_us) << ',' << cell(w.accuracy) << ',' << w.gear_index << ','
       << cell(std::optional<double>(w.measured_qps), "%.3f") << '\n';
  }
  return os.str();
}

std::string requests_csv(const SimMetrics& metrics) {
  std::ostringstream os;
  os << "request_id,sample_id,arrival_us,completion_us,latency_us,stages_executed,correct\n";
  for (const auto& r : metrics.requests) {
    if (!r.completed()) continue;
    os << r.request_id << ',' << r.sample_id << ',' << r.arrival_us << ','
       << r.completion_us << ',' << r.latency_us() << ',' << r.stages_executed << ','
       << (r.correct ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string gear_timeline_csv(const SimMetrics& metrics) {
  std::ostringstream os;
  os << "time_us,from_gear,to_gear,measured_qps,q0\n";
  for (const auto& e : metrics.gear_events) {
    os << e.time_us << ',' << e.from << ',' << e.to << ','
       << cell(std::optional<double>(e.measured_qps), "%.3f") << ',' << e.q0 << '\n';
  }
  return os.str();
}

RunSummary summarize(const SimMetrics& metrics, const GearPlan& plan, std::string name) {
  RunSummary s;
  s.name = std::move(name);
  s.devices = static_cast<int>(plan.placement.devices.size());
  s.arrivals = metrics.arrivals;
  s.completed = metrics.completed;
  s.backlogged = metrics.dropped_or_backlogged;
  if (!metrics.latencies_us.empty()) {
    s.p50_latency_us = percentile(metrics.latencies_us, 50.0);
    s.p95_latency_us = percentile(metrics.latencies_us, 95.0);
    s.p99_latency_us = percentile(metrics.latencies_us, 99.0);
  }
  std::int64_t correct = 0, done = 0;
  for (const auto& r : metrics.requests) {
    if (!r.completed()) continue;
    ++done;
    correct += r.correct ? 1 : 0;
  }
  if (done > 0) s.accuracy = static_cast<double>(correct) / static_cast<double>(done);
  s.gear_switches = static_cast<std::int64_t>(metrics.gear_events.size());
  s.horizon_us = metrics.horizon_us;
  s.slo = plan.slo;
  if (plan.slo.is_latency()) {
    s.slo_met = !s.p95_latency_us || *s.p95_latency_us <= plan.slo.latency_target_us;
  } else {
    s.slo_met = !s.accuracy || *s.accuracy >= plan.slo.accuracy_target;
  }
  s.per_model_batches = metrics.per_model_batches;
  s.per_range_throughput = metrics.per_range_throughput;
  return s;
}

std::string summary_json(const RunSummary& s) {
  json batches = json::object();
  for (const auto& [model, sizes] : s.per_model_batches) {
    json per = json::object();
    for (const auto& [size, n] : sizes) per[std::to_string(size)] = n;
    batches[model] = per;
  }
  json ranges = json::object();
  for (const auto& [r, t] : s.per_range_throughput) ranges[std::to_string(r)] = t;
  json slo = s.slo.is_latency()
                 ? json{{"kind", "latency"}, {"latency_target_us", s.slo.latency_target_us}}
                 : json{{"kind", "accuracy"}, {"accuracy_target", s.slo.accuracy_target}};
  json j = {{"name", s.name},
            {"devices", s.devices},
            {"arrivals", s.arrivals},
            {"completed", s.completed},
            {"backlogged", s.backlogged},
            {"p50_latency_us", opt(s.p50_latency_us)},
            {"p95_latency_us", opt(s.p95_latency_us)},
            {"p99_latency_us", opt(s.p99_latency_us)},
            {"accuracy", opt(s.accuracy)},
            {"gear_switches", s.gear_switches},
            {"horizon_us", s.horizon_us},
            {"slo", slo},
            {"slo_met", s.slo_met},
            {"per_model_batches", batches},
            {"per_range_throughput", ranges}};
  return j.dump(2) + "\n";
}

RunSummary parse_summary(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics summary: ") + e.what());
  }
  try {
    RunSummary s;
    s.name = j.value("name", std::string("run"));
    s.devices = j.at("devices").get<int>();
    s.arrivals = j.at("arrivals").get<std::int64_t>();
    s.completed = j.at("completed").get<std::int64_t>();
    s.backlogged = j.value("backlogged", std::int64_t{0});
    s.p50_latency_us = opt_get<Micros>(j, "p50_latency_us");
    s.p95_latency_us = opt_get<Micros>(j, "p95_latency_us");
    s.p99_latency_us = opt_get<Micros>(j, "p99_latency_us");
    s.accuracy = opt_get<double>(j, "accuracy");
    s.gear_switches = j.value("gear_switches", std::int64_t{0});
    s.horizon_us = j.value("horizon_us", Micros{0});
    if (j.contains("slo")) {
      const auto& slo = j.at("slo");
      s.slo = slo.at("kind").get<std::string>() == "latency"
                  ? Slo::latency(slo.at("latency_target_us").get<Micros>())
                  : Slo::accuracy(slo.at("accuracy_target").get<double>());
    }
    s.slo_met = j.value("slo_met", true);
    if (j.contains("per_model_batches")) {
      for (const auto& [model, sizes] : j.at("per_model_batches").items()) {
        for (const auto& [size, n] : sizes.items()) {
          s.per_model_batches[model][std::stoi(size)] = n.get<std::int64_t>();
        }
      }
    }
    if (j.contains("per_range_throughput")) {
      for (const auto& [r, t] : j.at("per_range_throughput").items()) {
        s.per_range_throughput[std::stoi(r)] = t.get<double>();
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics summary: ") + e.what());
  }
}

namespace {

void sort_runs(std::vector<RunSummary>& runs) {
  std::stable_sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    const double aa = a.accuracy.value_or(-1.0), bb = b.accuracy.value_or(-1.0);
    return aa > bb;
  });
}

}  // namespace

std::string report_table(std::vector<RunSummary> runs) {
  sort_runs(runs);
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %8s %12s %10s %10s %8s\n", "run", "devices",
                "p95_ms", "accuracy", "completed", "slo_met");
  os << line;
  for (const auto& r : runs) {
    const std::string p95 =
        r.p95_latency_us ? cell(std::optional<double>(*r.p95_latency_us / 1000.0), "%.3f")
                         : "-";
    const std::string acc = r.accuracy ? cell(r.accuracy, "%.4f") : "-";
    std::snprintf(line, sizeof line, "%-24s %8d %12s %10s %10lld %8s\n", r.name.c_str(),
                  r.devices, p95.c_str(), acc.c_str(), static_cast<long long>(r.completed),
                  r.slo_met ? "yes" : "no");
    os << line;
  }
  return os.str();
}

std::string report_csv(std::vector<RunSummary> runs) {
  sort_runs(runs);
  std::ostringstream os;
  os << "run,devices,p95_latency_us,accuracy,completed,slo_met\n";
  for (const auto& r : runs) {
    os << r.name << ',' << r.devices << ',' << cell(r.p95_latency_us) << ','
       << cell(r.accuracy) << ',' << r.completed << ',' << (r.slo_met ? 1 : 0) << '\n';
  }
  return os.str();
}

void write_run_outputs(const std::filesystem::path& dir, const SimMetrics& metrics,
                       const GearPlan& plan, const WindowConfig& windows) {
  write_file(dir / "metrics.json", summary_json(summarize(metrics, plan, dir.filename().string())));
  write_file(dir / "requests.csv", requests_csv(metrics));
  write_file(dir / "windows.csv", windows_csv(sliding_windows(metrics, windows)));
  write_file(dir / "gears.csv", gear_timeline_csv(metrics));
}

}  // namespace cascadeserve
