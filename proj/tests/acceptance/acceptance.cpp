// Acceptance run: one PASS/FAIL line per criterion.
//
//   cascadeserve_acceptance [--strict] [criterion ...]
//
// Without arguments every criterion runs. The exit status is 0 once all
// selected criteria have been evaluated; --strict makes any FAIL exit 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "cascadeserve/cascade_eval.hpp"
#include "cascadeserve/load_balancer.hpp"
#include "cascadeserve/metrics.hpp"
#include "cascadeserve/planner.hpp"
#include "cascadeserve/serving.hpp"
#include "cascadeserve/sim_engine.hpp"
#include "cascadeserve/synthetic.hpp"
#include "cascadeserve/workload.hpp"

using namespace cascadeserve;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Every cheap-to-expensive model subset; non-final stages take each value of
/// the grid for that model.
std::vector<Cascade> enumerate_cascades(const ProfileSet& profiles, const ThresholdGrid& grid) {
  const auto ids = profiles.ids_by_cost();
  std::vector<Cascade> out;
  for (unsigned mask = 1; mask < (1u << ids.size()); ++mask) {
    std::vector<std::string> chosen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (mask & (1u << i)) chosen.push_back(ids[i]);
    }
    std::function<void(std::size_t, Cascade)> rec = [&](std::size_t k, Cascade c) {
      if (k + 1 == chosen.size()) {
        c.stages.push_back({chosen[k], 0.0});
        out.push_back(c);
        return;
      }
      for (double t : grid.at(chosen[k])) {
        Cascade next = c;
        next.stages.push_back({chosen[k], t});
        rec(k + 1, next);
      }
    };
    rec(0, Cascade{});
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  }
};

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = cells;
      first = false;
    } else {
      t.rows.push_back(cells);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> n_models(1, 5);
  std::uniform_int_distribution<int> n_records(1, 200);
  std::uniform_real_distribution<double> thr(0.0, 1.0);
  int fixtures = 0, mismatches = 0;
  for (; fixtures < 120; ++fixtures) {
    const auto f = oracles::random_fixture(rng, n_models(rng), n_records(rng));
    for (const auto& c : oracles::all_cascades(f.profiles, {0.0, thr(rng), thr(rng), 1.0})) {
      if (!(evaluate_cascade(c, f.validation, f.profiles) == oracles::walk(c, f.validation, f.profiles))) {
        ++mismatches;
      }
    }
  }
  const double took = seconds_since(t0);
  return {mismatches == 0 && took < 10.0,
          fmt("%d fixtures, %d mismatches, %.2fs", fixtures, mismatches, took)};
}

Outcome criterion_2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> rt(2, 20);
  std::uniform_real_distribution<double> dem(0.0, 60.0);
  std::uniform_int_distribution<int> layout(0, 4);
  int checked = 0, bad = 0;
  double worst = 0;
  for (int trial = 0; trial < 300; ++trial) {
    ProfileSet profiles({ModelProfile{"a", 1, {{1, rt(rng) * 1000}}},
                         ModelProfile{"b", 1, {{1, rt(rng) * 1000}}}});
    const std::vector<Device> devs{{"d0", 10}, {"d1", 10}};
    std::vector<std::pair<std::string, std::string>> reps;
    switch (layout(rng)) {
      case 0: reps = {{"a", "d0"}, {"a", "d1"}}; break;
      case 1: reps = {{"a", "d0"}, {"a", "d1"}, {"b", "d1"}}; break;
      case 2: reps = {{"a", "d0"}, {"b", "d0"}, {"b", "d1"}}; break;
      case 3: reps = {{"a", "d0"}, {"b", "d1"}}; break;
      default: reps = {{"a", "d1"}, {"b", "d0"}, {"b", "d1"}}; break;
    }
    Placement pl;
    pl.devices = devs;
    std::map<std::string, double> demands;
    for (const auto& [m, d] : reps) {
      pl.replicas.push_back({make_replica_id(m, d), m, d});
      if (!demands.count(m)) demands[m] = dem(rng);
    }
    const double oracle = oracles::grid_u_min(pl, demands, profiles);
    if (oracle > 1.0) continue;
    const auto got = min_utilization(pl, demands, profiles);
    ++checked;
    const double err = got ? std::abs(got->u_min - oracle) : 1.0;
    worst = std::max(worst, err);
    if (err > 0.02) ++bad;
  }
  const double took = seconds_since(t0);
  return {checked >= 50 && bad == 0 && took < 60.0,
          fmt("%d cases, %d off by more than 0.02, worst %.4f, %.2fs", checked, bad, worst, took)};
}

struct PlannedCase {
  GearPlan plan;
  SyntheticWorkload workload;
  QpsDistribution dist;
};

std::vector<PlannedCase> g_feasible_plans;

Outcome criterion_3() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> models(2, 3);
  std::uniform_int_distribution<int> devices(1, 3);
  std::uniform_int_distribution<int> ranges(2, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int plans = 0, infeasible = 0, errors = 0, over_bound = 0, regressions = 0;
  for (int trial = 0; trial < 20; ++trial) {
    SyntheticSpec spec;
    spec.n_models = models(rng);
    spec.size_ratios.clear();
    for (int i = 0; i < spec.n_models; ++i) spec.size_ratios.push_back(std::pow(4.0, i));
    spec.easy_fraction = 0.5 + 0.4 * u(rng);
    spec.n_samples = 500;
    spec.seed = trial;
    auto w = generate_synthetic(spec);
    const int n_dev = devices(rng);
    // memory from barely one small model to everything everywhere
    const auto mem = static_cast<std::int64_t>((256LL << 20) * (1.0 + 20.0 * u(rng)));
    const int n_ranges = ranges(rng);
    const double qps_max = 50.0 + 550.0 * u(rng);
    const bool tight = trial % 3 == 0;
    const Slo slo = trial % 4 == 3
                        ? Slo::accuracy(tight ? 0.999 : 0.85 + 0.1 * u(rng))
                        : Slo::latency(tight ? 1500 + static_cast<Micros>(3000 * u(rng))
                                             : 20'000 + static_cast<Micros>(80'000 * u(rng)));
    PlannerConfig cfg;
    cfg.n_samples = 100;
    cfg.instrument = true;
    cfg.seed = trial;
    cfg.probe.measure_us = 4 * kMicrosPerSecond;
    cfg.probe.warmup_us = kMicrosPerSecond;
    const auto dist = zipf_distribution(n_ranges, 1.1);
    GearPlanner planner(w.profiles, uniform_devices(n_dev, mem), w.validation, dist, slo, qps_max,
                        n_ranges, cfg);
    try {
      GearPlan plan = planner.optimize();
      ++plans;
      g_feasible_plans.push_back({std::move(plan), w, dist});
    } catch (const UserInfeasible&) {
      ++infeasible;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "  config %d raised: %s\n", trial, e.what());
      ++errors;
    }
    const auto& s = planner.stats();
    if (static_cast<std::size_t>(s.downgrades) >
        static_cast<std::size_t>(n_ranges) * std::max<std::size_t>(s.candidate_count, 1)) {
      ++over_bound;
    }
    regressions += s.feasibility_regressions;
  }
  const double took = seconds_since(t0);
  return {errors == 0 && over_bound == 0 && regressions == 0 && took < 300.0,
          fmt("%d plans, %d infeasible, %d errors, %d over the downgrade bound, %d "
              "feasible-to-infeasible transitions, %.1fs",
              plans, infeasible, errors, over_bound, regressions, took)};
}

Outcome criterion_4() {
  if (g_feasible_plans.empty()) criterion_3();
  int checked = 0, violations = 0;
  const Micros warmup = kMicrosPerSecond, measure = 4 * kMicrosPerSecond;
  for (const auto& pc : g_feasible_plans) {
    const auto& plan = pc.plan;
    if (plan.slo.is_latency()) {
      for (int r = 0; r < plan.n_ranges; ++r) {
        RunOptions ro;
        ro.engine.fixed_gear = r;
        const auto m = run(plan, constant_rate_trace(plan.range_top_qps(r), warmup + measure),
                           pc.workload.validation, pc.workload.profiles, ro);
        std::vector<Micros> lat;
        for (const auto& q : m.requests) {
          if (q.arrival_us < warmup) continue;
          lat.push_back(q.completed() ? q.latency_us() : std::numeric_limits<Micros>::max());
        }
        const Micros p95 = lat.empty() ? 0 : percentile(lat, 95);
        ++checked;
        if (p95 > plan.slo.latency_target_us) ++violations;
      }
    } else {
      std::map<std::string, CascadeEval> evals;
      for (const auto& g : plan.gears) {
        evals[g.cascade.key()] = oracles::walk(g.cascade, pc.workload.validation, pc.workload.profiles);
      }
      ++checked;
      if (estimate_plan_accuracy(plan, pc.dist, evals) < plan.slo.accuracy_target - 0.001) {
        ++violations;
      }
    }
  }
  return {checked > 0 && violations == 0,
          fmt("%zu plans, %d range/plan checks, %d violations", g_feasible_plans.size(), checked,
              violations)};
}

Outcome criterion_5() {
  const auto t0 = Clock::now();
  SyntheticSpec spec;
  spec.n_samples = 1000;
  const auto w = generate_synthetic(spec);
  const int n_ranges = 4;
  const double qps_max = 2000;
  const auto dist = zipf_distribution(n_ranges, 1.1);
  const Slo slo = Slo::latency(40'000);
  PlannerConfig cfg;
  cfg.restricted = true;
  cfg.n_samples = 400;
  cfg.probe.warmup_us = kMicrosPerSecond;
  cfg.probe.measure_us = 3 * kMicrosPerSecond;
  const auto devices = uniform_devices(2, 8LL << 30);

  GearPlanner planner(w.profiles, devices, w.validation, dist, slo, qps_max, n_ranges, cfg);
  double planned = 0.0;
  try {
    const auto plan = planner.optimize();
    std::map<std::string, CascadeEval> evals;
    for (const auto& g : plan.gears) evals[g.cascade.key()] = evaluate_cascade(g.cascade, w.validation, w.profiles);
    planned = estimate_plan_accuracy(plan, dist, evals);
  } catch (const UserInfeasible&) {
    return {false, "restricted planner found no plan"};
  }

  // Exhaustive: each range independently takes the most accurate cascade that
  // the load balancer and a probe at the range's top QPS accept.
  GearPlanner helper(w.profiles, devices, w.validation, dist, slo, qps_max, n_ranges, cfg);
  const Placement placement = helper.init_plan().plan.placement;
  std::vector<std::pair<Cascade, CascadeEval>> all;
  for (const auto& c : enumerate_cascades(w.profiles, helper.grid())) {
    all.emplace_back(c, evaluate_cascade(c, w.validation, w.profiles));
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.second.accuracy != b.second.accuracy) return a.second.accuracy > b.second.accuracy;
    return a.second.mean_cost < b.second.mean_cost;
  });
  double best = 0.0;
  for (int r = 0; r < n_ranges; ++r) {
    double acc = -1;
    for (const auto& [c, e] : all) {
      const double top = (r + 1) * qps_max / n_ranges;
      const auto weights = helper.balance_gear(placement, c, top);
      if (!weights) continue;
      GearPlan probe_plan;
      probe_plan.placement = placement;
      probe_plan.qps_max = qps_max;
      probe_plan.n_ranges = n_ranges;
      probe_plan.slo = slo;
      probe_plan.gears.assign(static_cast<std::size_t>(n_ranges), Gear{c, {}, *weights});
      for (auto& g : probe_plan.gears) {
        for (const auto& rep : placement.replicas) g.min_queue_length[rep.replica_id] = 1;
      }
      if (probe_meets_slo(probe_range(probe_plan, r, w.profiles, w.validation, cfg.probe), slo)) {
        acc = e.accuracy;
        break;
      }
    }
    if (acc < 0) return {false, fmt("exhaustive search found no cascade for range %d", r)};
    best += dist.weights[static_cast<std::size_t>(r)] * acc;
  }
  const double took = seconds_since(t0);
  return {planned >= best - 0.02 && took < 600.0,
          fmt("planner %.4f, exhaustive %.4f over %zu cascades, %.1fs", planned, best, all.size(), took)};
}

Outcome criterion_6() {
  SyntheticSpec spec;
  spec.easy_fraction = 0.8;
  spec.size_ratios = {1, 4, 16};
  const auto w = generate_synthetic(spec);
  ThresholdGrid fine;
  for (const auto& id : w.profiles.ids_by_cost()) {
    for (int k = 0; k <= 100; ++k) fine[id].push_back(k / 100.0);
  }
  std::vector<EvaluatedCascade> evals;
  for (const auto& c : enumerate_cascades(w.profiles, fine)) {
    evals.emplace_back(c, evaluate_cascade(c, w.validation, w.profiles));
  }
  const auto largest = oracles::walk(make_single_model_cascade("m2"), w.validation, w.profiles);
  double best_ratio = std::numeric_limits<double>::infinity();
  std::string best_key;
  for (const auto& [c, e] : pareto_filter(evals)) {
    if (e.accuracy + 0.005 < largest.accuracy) continue;
    const double ratio = e.mean_cost / largest.mean_cost;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best_key = c.key();
    }
  }
  return {best_ratio <= 1.0 / 3.0,
          fmt("largest model %.4f over %zu cascades; %s at %.3f of its cost", largest.accuracy,
              evals.size(), best_key.c_str(), best_ratio)};
}

struct StepRun {
  CsvTable windows;
  SimMetrics metrics;
};

StepRun step_run(const SyntheticWorkload& w, const GearPlan& plan) {
  const auto trace = step_trace({{50, 10 * kMicrosPerSecond},
                                 {550, 10 * kMicrosPerSecond},
                                 {50, 10 * kMicrosPerSecond}});
  StepRun out;
  out.metrics = run(plan, trace, w.validation, w.profiles);
  out.windows = parse_csv(windows_csv(sliding_windows(out.metrics)));
  return out;
}

Outcome criterion_7() {
  SyntheticSpec spec;
  const auto w = generate_synthetic(spec);
  const auto devices = uniform_devices(2, 6LL << 30);
  const auto dist = zipf_distribution(4, 1.1);
  PlannerConfig cfg;
  cfg.n_samples = 300;
  std::vector<std::string> notes;
  bool pass = true;

  auto phase = [](const CsvTable& t, std::size_t row) {
    const double end = std::stod(t.rows[row][t.col("window_end_us")]);
    // low until 10 s, spike until 20 s, low afterwards
    return end <= 10e6 ? 0 : (end > 12e6 && end <= 20e6) ? 1 : (end >= 27e6 ? 2 : -1);
  };

  {
    const Micros slo_us = 60'000;
    const auto plan = optimize(w.profiles, devices, w.validation, dist, Slo::latency(slo_us), 600, 4,
                               0, cfg);
    const auto r = step_run(w, plan);
    const auto& t = r.windows;
    int gear_low = 99, gear_spike = 0, windows_over = 0;
    double acc_low = 1, acc_spike = 1, acc_after = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      const int gear = std::stoi(row[t.col("gear_index")]);
      const std::string p95 = row[t.col("p95_latency_us")];
      const std::string acc = row[t.col("accuracy")];
      if (!p95.empty() && std::stoll(p95) > slo_us) ++windows_over;
      if (acc.empty()) continue;
      const double a = std::stod(acc);
      switch (phase(t, i)) {
        case 0: gear_low = std::min(gear_low, gear); acc_low = std::min(acc_low, a); break;
        case 1: gear_spike = std::max(gear_spike, gear); acc_spike = std::min(acc_spike, a); break;
        case 2: acc_after = std::max(acc_after, a); break;
        default: break;
      }
    }
    const bool ok = gear_spike > gear_low && windows_over == 0 && acc_spike < acc_low &&
                    acc_after >= acc_low - 0.02;
    pass = pass && ok;
    notes.push_back(fmt("latency SLO: gear %d->%d, %d windows over SLO, accuracy %.3f/%.3f/%.3f",
                        gear_low, gear_spike, windows_over, acc_low, acc_spike, acc_after));
  }
  {
    const double target = 0.95;
    const auto plan = optimize(w.profiles, devices, w.validation, dist, Slo::accuracy(target), 600,
                               4, 0, cfg);
    double worst_gear = 1;
    for (const auto& g : plan.gears) {
      worst_gear = std::min(worst_gear, oracles::walk(g.cascade, w.validation, w.profiles).accuracy);
    }
    const auto r = step_run(w, plan);
    const auto& t = r.windows;
    double min_margin = 1;
    Micros p95_low = 0, p95_spike = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      const std::string p95 = row[t.col("p95_latency_us")];
      const std::string acc = row[t.col("accuracy")];
      if (!acc.empty()) {
        const double n = std::stod(row[t.col("completed")]);
        const double sigma = std::sqrt(target * (1 - target) / n);
        min_margin = std::min(min_margin, std::stod(acc) - (target - 3 * sigma));
      }
      if (p95.empty()) continue;
      if (phase(t, i) == 0) p95_low = std::max<Micros>(p95_low, std::stoll(p95));
      if (phase(t, i) == 1) p95_spike = std::max<Micros>(p95_spike, std::stoll(p95));
    }
    const bool ok = worst_gear >= target && min_margin >= 0 && p95_spike > p95_low;
    pass = pass && ok;
    notes.push_back(fmt("accuracy SLO %.2f: least accurate gear %.4f, smallest window margin "
                        "%.4f, p95 %lldus -> %lldus",
                        target, worst_gear, min_margin, static_cast<long long>(p95_low),
                        static_cast<long long>(p95_spike)));
  }
  return {pass, notes[0] + "; " + notes[1]};
}

Outcome criterion_8() {
  std::vector<Device> devs{{"d0", 1}};
  Placement pl;
  pl.devices = devs;
  pl.replicas.push_back({"m@d0", "m", "d0"});
  GearPlan plan;
  plan.placement = pl;
  plan.qps_max = 400;
  plan.n_ranges = 8;
  plan.slo = Slo::latency(1000);
  plan.gears.assign(8, Gear{make_single_model_cascade("m"), {{"m@d0", 1}}, {{"m@d0", 1.0}}});
  int cases = 0, mismatches = 0;
  for (double qps = 0; qps <= 450; qps += 12.5) {
    for (std::int64_t q0 : {0, 1, 2, 5, 10, 40, 100, 1000}) {
      for (double alpha : {0.5, 1.0, 2.0, 8.0, 32.0}) {
        for (int current = 0; current < 8; ++current) {
          const int candidate = std::min(7, static_cast<int>(qps / 50.0));
          const int want = candidate < current && qps < alpha * static_cast<double>(q0) ? current : candidate;
          ++cases;
          if (maybe_switch_gear(qps, q0, current, plan, alpha) != want) ++mismatches;
        }
      }
    }
  }
  return {mismatches == 0, fmt("%d cases, %d mismatches", cases, mismatches)};
}

Outcome criterion_9() {
  SyntheticSpec spec;
  const auto w = generate_synthetic(spec);
  PlannerConfig cfg;
  cfg.n_samples = 300;
  const auto dist = zipf_distribution(4, 1.1);
  const auto plan = optimize(w.profiles, uniform_devices(2, 6LL << 30), w.validation, dist,
                             Slo::latency(60'000), 600, 4, 0, cfg);
  const auto trace = zipf_trace(dist, 600, 30, 9).trace;
  const auto a = run(plan, trace, w.validation, w.profiles);
  const auto b = run(plan, trace, w.validation, w.profiles);
  const bool same = requests_csv(a) == requests_csv(b) && gear_timeline_csv(a) == gear_timeline_csv(b) &&
                    a.latencies_us == b.latencies_us;

  // slowed fixture: one model at 50 ms, 12 QPS
  ProfileSet slow({ModelProfile{"m", 1, {{1, 50'000}, {2, 75'000}, {8, 150'000}}}});
  std::vector<ValidationRecord> recs;
  for (int i = 0; i < 100; ++i) recs.push_back({i, {{"m", ModelOutput{{0.9, 0.1}, true}}}});
  const ValidationSet v(recs);
  Placement pl;
  pl.devices = {{"d0", 10}};
  pl.replicas = {{"m@d0", "m", "d0"}};
  GearPlan sp;
  sp.placement = pl;
  sp.qps_max = 20;
  sp.n_ranges = 1;
  sp.slo = Slo::latency(kMicrosPerSecond);
  sp.gears = {Gear{make_single_model_cascade("m"), {{"m@d0", 1}}, {{"m@d0", 1.0}}}};
  const auto slow_trace = constant_rate_trace(12, 4 * kMicrosPerSecond);
  const auto virt = run(sp, slow_trace, v, slow);
  const auto wall = serve_trace(sp, slow_trace, v, slow);
  const double pv = static_cast<double>(percentile(virt.latencies_us, 95));
  const double pw = wall.latencies_us.empty() ? 0.0 : static_cast<double>(percentile(wall.latencies_us, 95));
  const double gap = std::abs(pw - pv) / pv;
  return {same && gap <= 0.10,
          fmt("repeat runs %s; p95 virtual %.0fus, wall %.0fus (%.1f%%)",
              same ? "identical" : "differ", pv, pw, 100 * gap)};
}

Outcome criterion_10() {
  SyntheticSpec spec;
  spec.n_samples = 1000;
  const auto w = generate_synthetic(spec);
  PlannerConfig cfg;
  cfg.n_samples = 300;
  std::vector<int> calls;
  double last_wall = 0;
  std::string trail;
  for (int n : {4, 8, 16, 32}) {
    PlannerStats stats;
    const auto t0 = Clock::now();
    try {
      optimize(w.profiles, uniform_devices(2, 6LL << 30), w.validation, zipf_distribution(n, 1.1),
               Slo::latency(60'000), 600, n, 0, cfg, &stats);
    } catch (const UserInfeasible&) {
      return {false, fmt("n_ranges %d found no plan", n)};
    }
    last_wall = seconds_since(t0);
    calls.push_back(stats.submodule_calls);
    trail += fmt("%s%d:%d", trail.empty() ? "" : " ", n, stats.submodule_calls);
  }
  const bool monotone = std::is_sorted(calls.begin(), calls.end());
  return {monotone && last_wall < 300.0,
          fmt("calls by n_ranges %s; n_ranges 32 took %.1fs", trail.c_str(), last_wall)};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else {
      selected.insert(std::stoi(a));
    }
  }
  const std::vector<std::function<Outcome()>> criteria{
      criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
      criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("raised: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %d: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return strict && failed > 0 ? 1 : 0;
}
