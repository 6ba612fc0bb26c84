#include "cascadeserve/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "cascadeserve/io.hpp"
#include "cascadeserve/load_balancer.hpp"
#include "cascadeserve/workload.hpp"

namespace cascadeserve {

namespace {

constexpr Micros kUnfinished = std::numeric_limits<Micros>::max();
const char* const kSubmodules[] = {"sp1_search_cascades", "sp2_assign_cascades",
                                   "sp3_place_models", "sp4_tune_batch_sizes"};

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Placement full_replication(const std::vector<Device>& devices, const ProfileSet& profiles) {
  Placement p;
  p.devices = devices;
  for (const auto& d : devices) {
    for (const auto& m : profiles.models()) {
      p.replicas.push_back({make_replica_id(m.model_id, d.device_id), m.model_id, d.device_id});
    }
  }
  return p;
}

std::string placement_signature(const Placement& p) {
  std::string s;
  for (const auto& r : p.replicas) s += r.replica_id + ";";
  return s;
}

void reset_gear(Gear& gear, const Placement& placement) {
  gear.min_queue_length.clear();
  gear.load_weights.clear();
  for (const auto& st : gear.cascade.stages) {
    for (const Replica* r : placement.replicas_of_model(st.model_id)) {
      gear.min_queue_length[r->replica_id] = 1;
    }
  }
}

std::set<std::string> models_in_use(const GearPlan& plan) {
  std::set<std::string> used;
  for (const auto& g : plan.gears) {
    for (const auto& st : g.cascade.stages) used.insert(st.model_id);
  }
  return used;
}

}  // namespace

RangeProbe probe_range(const GearPlan& plan, int range, const ProfileSet& profiles,
                       const ValidationSet& validation, const ProbeConfig& config) {
  RangeProbe out;
  out.qps = plan.range_top_qps(range);
  const Gear& gear = plan.gears.at(static_cast<std::size_t>(range));
  const Micros end = config.warmup_us + config.measure_us;

  RunOptions ro;
  ro.engine.fixed_gear = range;
  ro.engine.measure_period_us = config.measure_period_us;
  ro.engine.seed = config.seed;
  ro.engine.record_batches = false;
  ro.drain_limit_us = kMicrosPerSecond;
  if (plan.slo.is_latency()) ro.drain_limit_us += 2 * plan.slo.latency_target_us;
  const SimMetrics m =
      run(plan, constant_rate_trace(out.qps, end), validation, profiles, ro);

  std::vector<Micros> lat;
  for (const auto& r : m.requests) {
    if (r.arrival_us < config.warmup_us || r.arrival_us >= end) continue;
    lat.push_back(r.completed() ? r.latency_us() : kUnfinished);
    if (r.completed()) ++out.completed;
  }
  out.p95_us = lat.empty() ? 0 : percentile(lat, 95.0);

  double slack = 0.0;
  for (const auto& [rid, k] : gear.min_queue_length) slack += k - 1;
  out.backlog = m.queued_at_trace_end;
  out.backlog_allowance = 2.0 * out.qps *
                              (static_cast<double>(config.measure_period_us) /
                               kMicrosPerSecond) +
                          slack;
  out.throughput_ok = static_cast<double>(out.backlog) <= out.backlog_allowance;

  // Where the work piles up: the largest end-of-probe queue when throughput
  // fell short, otherwise the largest mean wait plus service.
  double best = -1.0;
  for (const auto& st : gear.cascade.stages) {
    auto it = m.model_stats.find(st.model_id);
    if (it == m.model_stats.end()) continue;
    const ModelStats& s = it->second;
    double score;
    if (!out.throughput_ok) {
      score = static_cast<double>(s.queued_at_trace_end);
    } else {
      score = s.samples == 0 ? 0.0
                             : static_cast<double>(s.total_wait_us + s.total_service_us) /
                                   static_cast<double>(s.samples);
    }
    if (score > best) {
      best = score;
      out.bottleneck_model = st.model_id;
    }
  }
  if (!out.bottleneck_model && !gear.cascade.stages.empty()) {
    out.bottleneck_model = gear.cascade.first_model();
  }
  return out;
}

bool probe_meets_slo(const RangeProbe& probe, const Slo& slo) {
  if (!probe.throughput_ok) return false;
  return !slo.is_latency() || probe.p95_us <= slo.latency_target_us;
}

GearPlanner::GearPlanner(const ProfileSet& profiles, std::vector<Device> devices,
                         const ValidationSet& validation, QpsDistribution dist, Slo slo,
                         double qps_max, int n_ranges, PlannerConfig config)
    : profiles_(profiles),
      devices_(std::move(devices)),
      validation_(validation),
      dist_(std::move(dist)),
      slo_(slo),
      qps_max_(qps_max),
      n_ranges_(n_ranges),
      config_(config) {
  if (profiles_.size() == 0) throw ValidationError("no models to plan for");
  if (devices_.empty()) throw ValidationError("no devices to plan for");
  if (n_ranges_ < 1) throw ValidationError("n_ranges must be positive");
  if (!(qps_max_ > 0.0)) throw ValidationError("qps_max must be positive");
  if (dist_.size() != static_cast<std::size_t>(n_ranges_)) {
    throw ValidationError("QPS distribution has " + std::to_string(dist_.size()) +
                          " weights for " + std::to_string(n_ranges_) + " ranges");
  }
  const double total = std::accumulate(dist_.weights.begin(), dist_.weights.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("QPS distribution has no mass");
  for (double& w : dist_.weights) {
    if (w < 0.0) throw ValidationError("negative QPS distribution weight");
    w /= total;
  }
  if (slo_.is_latency() && slo_.latency_target_us <= 0) {
    throw ValidationError("latency target must be positive");
  }
  validation_.check_covers(profiles_);
  grid_ = build_threshold_grid(validation_, profiles_, config_.grid_levels);
}

PlannerState GearPlanner::init_plan() const {
  PlannerState state;
  state.devices = devices_;
  state.plan.placement = full_replication(devices_, profiles_);
  state.plan.qps_max = qps_max_;
  state.plan.n_ranges = n_ranges_;
  state.plan.slo = slo_;
  state.plan.gears.resize(static_cast<std::size_t>(n_ranges_));
  for (auto& g : state.plan.gears) {
    for (const auto& r : state.plan.placement.replicas) g.min_queue_length[r.replica_id] = 1;
  }
  state.downgrade_index.assign(static_cast<std::size_t>(n_ranges_), 0);
  state.downgrades.assign(static_cast<std::size_t>(n_ranges_), 0);
  return state;
}

const CascadeEval& GearPlanner::eval_of(const Cascade& cascade) {
  const std::string key = cascade.key();
  auto it = evals_.find(key);
  if (it == evals_.end()) {
    it = evals_.emplace(key, evaluate_cascade(cascade, validation_, profiles_)).first;
  }
  return it->second;
}

bool GearPlanner::slo_before(const CandidateCascade& a, const CandidateCascade& b) const {
  const auto& ea = a.eval;
  const auto& eb = b.eval;
  if (slo_.is_latency()) {
    if (ea.accuracy != eb.accuracy) return ea.accuracy > eb.accuracy;
    if (ea.mean_cost != eb.mean_cost) return ea.mean_cost < eb.mean_cost;
  } else {
    if (ea.mean_cost != eb.mean_cost) return ea.mean_cost < eb.mean_cost;
    if (ea.accuracy != eb.accuracy) return ea.accuracy > eb.accuracy;
  }
  return a.cascade.key() < b.cascade.key();
}

std::vector<const CandidateCascade*> GearPlanner::downgrade_order(
    const PlannerState& state) const {
  std::vector<EvaluatedCascade> all;
  all.reserve(state.candidates.size());
  for (const auto& [key, c] : state.candidates) {
    if (!slo_.is_latency() && c.eval.accuracy < slo_.accuracy_target - 1e-12) continue;
    all.emplace_back(c.cascade, c.eval);
  }
  std::vector<const CandidateCascade*> order;
  for (const auto& [cascade, eval] : pareto_filter(all)) {
    order.push_back(&state.candidates.at(cascade.key()));
  }
  std::sort(order.begin(), order.end(),
            [this](const auto* a, const auto* b) { return slo_before(*a, *b); });
  return order;
}

bool GearPlanner::can_downgrade(const PlannerState& state, int range) const {
  const Gear& g = state.plan.gears.at(static_cast<std::size_t>(range));
  auto it = state.candidates.find(g.cascade.key());
  if (it == state.candidates.end()) return false;
  for (const auto* c : downgrade_order(state)) {
    if (slo_before(it->second, *c)) return true;
  }
  return false;
}

std::optional<std::map<std::string, double>> GearPlanner::balance_gear(
    const Placement& placement, const Cascade& cascade, double qps) {
  const auto demands = model_qps_demand(eval_of(cascade), qps);
  const auto mu = min_utilization(placement, demands, profiles_);
  if (!mu) return std::nullopt;
  return mu->assignment.q;
}

double GearPlanner::probe_throughput(const Placement& placement, const Cascade& cascade) {
  const CascadeEval& eval = eval_of(cascade);
  for (const auto& st : cascade.stages) {
    if (placement.replicas_of_model(st.model_id).empty()) return 0.0;
  }
  const double cap = max_throughput(placement, eval.forward_fraction, profiles_);
  if (!(cap > 0.0)) return 0.0;

  GearPlan plan;
  plan.placement = placement;
  plan.qps_max = cap;
  plan.n_ranges = 1;
  plan.slo = slo_;
  Gear g;
  g.cascade = cascade;
  reset_gear(g, placement);
  const auto assignment =
      solve_lp(placement, model_qps_demand(eval, cap * 0.999), profiles_, 1.0);
  if (assignment) g.load_weights = assignment->q;
  plan.gears.push_back(std::move(g));

  const double offered = 2.0 * cap;
  const Micros duration = std::clamp<Micros>(
      static_cast<Micros>(40000.0 / offered * kMicrosPerSecond), kMicrosPerSecond / 5,
      kMicrosPerSecond);
  const Micros warmup = duration / 4;
  RunOptions ro;
  ro.engine.fixed_gear = 0;
  ro.engine.seed = config_.seed;
  ro.engine.record_batches = false;
  ro.drain_limit_us = 0;
  const SimMetrics m =
      run(plan, constant_rate_trace(offered, duration), validation_, profiles_, ro);
  std::int64_t done = 0;
  for (const auto& r : m.requests) {
    if (r.completed() && r.completion_us >= warmup && r.completion_us < duration) ++done;
  }
  return static_cast<double>(done) /
         (static_cast<double>(duration - warmup) / kMicrosPerSecond);
}

RangeProbe GearPlanner::probe(const GearPlan& plan, int range) {
  const Gear& g = plan.gears.at(static_cast<std::size_t>(range));
  std::string key = placement_signature(plan.placement) + "|" + g.cascade.key() + "|" +
                    fmt_double(plan.range_top_qps(range)) + "|";
  for (const auto& [rid, k] : g.min_queue_length) key += rid + "=" + std::to_string(k) + ",";
  key += "|";
  for (const auto& [rid, q] : g.load_weights) key += rid + "=" + fmt_double(q) + ",";
  auto it = probe_cache_.find(key);
  if (it != probe_cache_.end()) return it->second;
  RangeProbe p = probe_range(plan, range, profiles_, validation_, config_.probe);
  probe_cache_.emplace(std::move(key), p);
  return p;
}

double GearPlanner::weighted_accuracy(const GearPlan& plan) {
  for (const auto& g : plan.gears) eval_of(g.cascade);
  return estimate_plan_accuracy(plan, dist_, evals_);
}

bool GearPlanner::plan_feasible(const GearPlan& plan) {
  for (const auto& g : plan.gears) {
    if (g.cascade.stages.empty()) return false;
  }
  if (!config_.restricted && !plan.placement.memory_feasible(profiles_)) return false;
  if (!slo_.is_latency() && weighted_accuracy(plan) < slo_.accuracy_target - 1e-12) {
    return false;
  }
  for (int r = 0; r < plan.n_ranges; ++r) {
    if (!probe_meets_slo(probe(plan, r), slo_)) return false;
  }
  return true;
}

double GearPlanner::non_slo_badness(const GearPlan& plan) {
  if (slo_.is_latency()) return -weighted_accuracy(plan);
  double total = 0.0;
  for (int r = 0; r < plan.n_ranges; ++r) {
    const RangeProbe p = probe(plan, r);
    const double lat = p.p95_us == kUnfinished ? 1e18 : static_cast<double>(p.p95_us);
    total += dist_.weights[static_cast<std::size_t>(r)] * lat;
  }
  return total;
}

void GearPlanner::rebuild_queue_lengths(GearPlan& plan, const GearPlan& previous) const {
  for (std::size_t i = 0; i < plan.gears.size(); ++i) {
    Gear& g = plan.gears[i];
    const Gear& old = previous.gears[i];
    g.min_queue_length.clear();
    for (std::size_t s = 0; s < g.cascade.stages.size(); ++s) {
      for (const Replica* r : plan.placement.replicas_of_model(g.cascade.stages[s].model_id)) {
        int k = 1;
        auto it = old.min_queue_length.find(r->replica_id);
        if (s == 0 && it != old.min_queue_length.end() && !old.cascade.stages.empty() &&
            old.cascade.first_model() == g.cascade.first_model()) {
          k = it->second;
        }
        g.min_queue_length[r->replica_id] = k;
      }
    }
  }
}

// ---- SP1 ------------------------------------------------------------------

PlannerError GearPlanner::sp1_search_cascades(const PlannerError& err, PlannerState& state) {
  if (!err.ok()) throw UserInfeasible();
  const std::uint64_t seed = config_.seed + static_cast<std::uint64_t>(state.sp1_calls);
  ++state.sp1_calls;

  const auto sampled = sample_cascades(profiles_, validation_, grid_, config_.n_samples, seed);
  std::vector<EvaluatedCascade> evaluated;
  evaluated.reserve(sampled.size());
  for (const auto& c : sampled) evaluated.emplace_back(c, eval_of(c));
  std::vector<Cascade> keep;
  for (auto& [c, e] : pareto_filter(evaluated)) keep.push_back(c);
  keep.push_back(make_single_model_cascade(profiles_.ids_by_cost().front()));
  keep.push_back(make_single_model_cascade(most_accurate_model(profiles_, validation_)));

  for (const auto& c : keep) {
    CandidateCascade cand;
    cand.cascade = c;
    cand.eval = eval_of(c);
    cand.throughput = probe_throughput(state.plan.placement, c);
    state.candidates[c.key()] = std::move(cand);
  }
  return PlannerError::success();
}

// ---- SP2 ------------------------------------------------------------------

PlannerError GearPlanner::sp2_assign_cascades(const PlannerError& err, PlannerState& state) {
  const auto order = downgrade_order(state);
  if (order.empty()) return PlannerError::infeasible(0, "no candidate cascades");
  GearPlan& plan = state.plan;

  if (!state.assigned) {
    for (auto& g : plan.gears) {
      g.cascade = order.front()->cascade;
      reset_gear(g, plan.placement);
    }
    state.assigned = true;
    return PlannerError::success();
  }

  if (!err.ok()) {
    const int r = err.qps_range_index.value_or(n_ranges_ - 1);
    Gear& g = plan.gears.at(static_cast<std::size_t>(r));
    const CandidateCascade& cur = state.candidates.at(g.cascade.key());
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (slo_before(cur, *order[i])) {
        g.cascade = order[i]->cascade;
        reset_gear(g, plan.placement);
        state.downgrade_index[static_cast<std::size_t>(r)] = static_cast<int>(i);
        ++state.downgrades[static_cast<std::size_t>(r)];
        ++stats_.downgrades;
        return PlannerError::success();
      }
    }
    return PlannerError::infeasible(r, "no cascade left to fall back to at range " +
                                           std::to_string(r));
  }

  if (!state.feasible_once) return PlannerError::success();

  // Swap in candidates at least as accurate and as fast as the current one,
  // strictly better on one of the two, when the plan stays feasible.
  for (int r = 0; r < n_ranges_; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    for (const auto* c : order) {
      const CandidateCascade& cur = state.candidates.at(plan.gears[ri].cascade.key());
      if (c->cascade.key() == cur.cascade.key()) continue;
      const bool weakly = c->eval.accuracy >= cur.eval.accuracy &&
                          c->throughput >= cur.throughput;
      const bool strictly = c->eval.accuracy > cur.eval.accuracy ||
                            c->throughput > cur.throughput;
      if (!weakly || !strictly) continue;
      GearPlan trial = plan;
      Gear& g = trial.gears[ri];
      g.cascade = c->cascade;
      reset_gear(g, trial.placement);
      const auto weights = balance_gear(trial.placement, g.cascade, trial.range_top_qps(r));
      if (!weights) continue;
      g.load_weights = *weights;
      if (!tune_range(trial, r).first) continue;
      if (!plan_feasible(trial)) continue;
      if (non_slo_badness(trial) > non_slo_badness(plan)) continue;
      plan = std::move(trial);
    }
  }
  return PlannerError::success();
}

// ---- SP3 ------------------------------------------------------------------

GearPlanner::PruneOutcome GearPlanner::prune_placement(const PlannerState& state) {
  PruneOutcome out;
  Placement placement = full_replication(devices_, profiles_);
  const auto used = models_in_use(state.plan);

  // Heaviest demand per distinct cascade: min_utilization scales with QPS,
  // so the top range using a cascade dominates the others.
  std::map<std::string, std::pair<Cascade, double>> heaviest;
  for (int r = 0; r < n_ranges_; ++r) {
    const Cascade& c = state.plan.gears[static_cast<std::size_t>(r)].cascade;
    auto& slot = heaviest[c.key()];
    slot.first = c;
    slot.second = std::max(slot.second, state.plan.range_top_qps(r));
  }
  std::set<std::string> blocked;

  while (true) {
    std::map<std::string, std::int64_t> over;
    bool any_over = false;
    for (const auto& d : devices_) {
      over[d.device_id] = placement.memory_used(d.device_id, profiles_) -
                          d.memory_capacity_bytes;
      any_over = any_over || over[d.device_id] > 0;
    }
    if (!any_over) {
      out.placement = std::move(placement);
      break;
    }

    std::map<std::string, std::size_t> count;
    for (const auto& r : placement.replicas) ++count[r.model_id];

    double best_util = 0.0;
    std::optional<std::size_t> best;
    std::vector<std::size_t> order(placement.replicas.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return placement.replicas[a].replica_id < placement.replicas[b].replica_id;
    });
    for (std::size_t idx : order) {
      const Replica& rep = placement.replicas[idx];
      const std::int64_t dev_over = over[rep.device_id];
      if (dev_over <= 0) continue;
      const std::string& m = rep.model_id;
      const bool in_use = used.count(m) > 0;
      if (in_use && count[m] <= 1) {
        blocked.insert(m);
        continue;
      }
      if (in_use) {
        auto f = state.forced_replicas.find(m);
        if (f != state.forced_replicas.end() &&
            static_cast<int>(count[m]) <= f->second) {
          blocked.insert(m);
          continue;
        }
      }

      Placement trial = placement;
      trial.replicas.erase(trial.replicas.begin() + static_cast<std::ptrdiff_t>(idx));
      double u_max = kUtilizationTolerance;
      bool lb_ok = true;
      if (in_use) {
        for (const auto& [key, slot] : heaviest) {
          if (!slot.first.uses(m)) continue;
          const auto mu = min_utilization(
              trial, model_qps_demand(eval_of(slot.first), slot.second), profiles_);
          if (!mu) {
            lb_ok = false;
            break;
          }
          u_max = std::max(u_max, mu->u_min);
        }
      }
      if (!lb_ok) {
        blocked.insert(m);
        continue;
      }

      const auto freed = profiles_.at(m).memory_bytes;
      double numerator = 0.0;
      if (config_.literal_prune_utility) {
        for (const auto& [d, o] : over) {
          const std::int64_t after = d == rep.device_id ? o - freed : o;
          numerator += static_cast<double>(std::max<std::int64_t>(0, after));
        }
      } else {
        numerator = static_cast<double>(std::min(dev_over, freed));
      }
      const double util = numerator / u_max;
      if (util > best_util) {
        best_util = util;
        best = idx;
      }
    }
    if (!best) break;
    placement.replicas.erase(placement.replicas.begin() + static_cast<std::ptrdiff_t>(*best));
  }
  out.blocked_models.assign(blocked.begin(), blocked.end());
  return out;
}

int GearPlanner::pick_failing_range(const PlannerState& state,
                                    const std::vector<std::string>& blocked_models) const {
  std::optional<int> any_blocked;
  for (int r = n_ranges_ - 1; r >= 0; --r) {
    const Cascade& c = state.plan.gears[static_cast<std::size_t>(r)].cascade;
    const bool hit = std::any_of(blocked_models.begin(), blocked_models.end(),
                                 [&](const std::string& m) { return c.uses(m); });
    if (!hit) continue;
    if (can_downgrade(state, r)) return r;
    if (!any_blocked) any_blocked = r;
  }
  if (any_blocked) return *any_blocked;
  for (int r = n_ranges_ - 1; r >= 0; --r) {
    if (can_downgrade(state, r)) return r;
  }
  return n_ranges_ - 1;
}

PlannerError GearPlanner::sp3_place_models(const PlannerError& err, PlannerState& state) {
  std::optional<std::pair<std::string, std::optional<int>>> raised;
  if (!err.ok()) {
    if (!err.bottleneck_model || config_.restricted) return err;
    const std::string& m = *err.bottleneck_model;
    const int have = static_cast<int>(state.plan.placement.replicas_of_model(m).size());
    if (have >= static_cast<int>(devices_.size())) {
      return PlannerError::infeasible(*err.qps_range_index,
                                      "every device already holds a replica of " + m);
    }
    auto it = state.forced_replicas.find(m);
    std::optional<int> before;
    if (it != state.forced_replicas.end()) before = it->second;
    state.forced_replicas[m] = std::max(before.value_or(0), have + 1);
    raised.emplace(m, before);
  }
  const bool guarded = state.feasible_once && err.ok();

  auto undo_raise = [&] {
    if (!raised) return;
    if (raised->second) {
      state.forced_replicas[raised->first] = *raised->second;
    } else {
      state.forced_replicas.erase(raised->first);
    }
  };

  Placement placement;
  if (config_.restricted) {
    placement = full_replication(devices_, profiles_);
  } else {
    const PruneOutcome pruned = prune_placement(state);
    if (!pruned.placement) {
      undo_raise();
      if (guarded) return PlannerError::success();
      const int r = err.ok() ? pick_failing_range(state, pruned.blocked_models)
                             : *err.qps_range_index;
      return PlannerError::infeasible(r, "models do not fit in device memory");
    }
    placement = *pruned.placement;
  }

  GearPlan trial = state.plan;
  trial.placement = placement;
  std::optional<int> lb_fail;
  for (int r = n_ranges_ - 1; r >= 0; --r) {
    Gear& g = trial.gears[static_cast<std::size_t>(r)];
    const auto weights = balance_gear(placement, g.cascade, trial.range_top_qps(r));
    if (!weights) {
      if (!lb_fail || (can_downgrade(state, r) && !can_downgrade(state, *lb_fail))) {
        lb_fail = r;
      }
      continue;
    }
    g.load_weights = *weights;
  }
  if (lb_fail) {
    undo_raise();
    if (guarded) return PlannerError::success();
    return PlannerError::infeasible(
        err.ok() ? *lb_fail : *err.qps_range_index,
        "load balancer cannot carry range " + std::to_string(*lb_fail));
  }
  rebuild_queue_lengths(trial, state.plan);

  if (guarded) {
    if (trial == state.plan) return PlannerError::success();
    for (int r = 0; r < n_ranges_; ++r) {
      if (!tune_range(trial, r).first) return PlannerError::success();
    }
    if (plan_feasible(trial) && non_slo_badness(trial) <= non_slo_badness(state.plan)) {
      state.plan = std::move(trial);
    }
    return PlannerError::success();
  }
  state.plan = std::move(trial);
  return PlannerError::success();
}

// ---- SP4 ------------------------------------------------------------------

std::pair<bool, RangeProbe> GearPlanner::tune_range(GearPlan& plan, int range) {
  Gear& g = plan.gears.at(static_cast<std::size_t>(range));
  const std::string first = g.cascade.first_model();
  const auto reps = plan.placement.replicas_of_model(first);
  const auto saved = g.min_queue_length;
  auto set_first = [&](int k) {
    for (const Replica* r : reps) g.min_queue_length[r->replica_id] = k;
  };

  const int cap = config_.restricted ? 1 : profiles_.at(first).max_profiled_batch();
  RangeProbe last;
  for (int k = 1; k <= cap; ++k) {
    if (k > 1 && slo_.is_latency()) {
      // Waiting for k-1 more arrivals on the busiest first-stage replica.
      double best_rate = 0.0;
      for (const Replica* r : reps) {
        auto it = g.load_weights.find(r->replica_id);
        if (it != g.load_weights.end()) best_rate = std::max(best_rate, it->second);
      }
      if (best_rate <= 0.0 ||
          (k - 1) / best_rate * kMicrosPerSecond > static_cast<double>(slo_.latency_target_us)) {
        break;
      }
    }
    set_first(k);
    last = probe(plan, range);
    if (probe_meets_slo(last, slo_)) return {true, last};
  }
  g.min_queue_length = saved;
  return {false, last};
}

int GearPlanner::pick_accuracy_range(const PlannerState& state) const {
  const auto order = downgrade_order(state);
  int best = -1;
  double best_gain = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < n_ranges_; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const CandidateCascade& cur = state.candidates.at(state.plan.gears[ri].cascade.key());
    for (const auto* c : order) {
      if (!slo_before(cur, *c)) continue;
      const double gain = dist_.weights[ri] * (c->eval.accuracy - cur.eval.accuracy);
      if (gain > best_gain) {
        best_gain = gain;
        best = r;
      }
      break;
    }
  }
  return best < 0 ? n_ranges_ - 1 : best;
}

PlannerError GearPlanner::sp4_tune_batch_sizes(const PlannerError& err, PlannerState& state) {
  if (!err.ok()) return err;
  if (!slo_.is_latency() && weighted_accuracy(state.plan) < slo_.accuracy_target - 1e-12) {
    if (!state.feasible_once) {
      return PlannerError::infeasible(pick_accuracy_range(state),
                                      "plan accuracy below the target");
    }
  }

  GearPlan trial = state.plan;
  for (int r = 0; r < n_ranges_; ++r) {
    const auto [ok, p] = tune_range(trial, r);
    if (ok) continue;
    if (state.feasible_once) {
      trial.gears[static_cast<std::size_t>(r)].min_queue_length =
          state.plan.gears[static_cast<std::size_t>(r)].min_queue_length;
      continue;
    }
    std::string why = p.throughput_ok ? "p95 latency above the target"
                                      : "throughput below the range's top QPS";
    return PlannerError::infeasible(r, why + " at range " + std::to_string(r),
                                    p.bottleneck_model);
  }
  if (state.feasible_once && !slo_.is_latency() &&
      non_slo_badness(trial) > non_slo_badness(state.plan)) {
    return PlannerError::success();
  }
  state.plan = std::move(trial);
  state.feasible_once = true;
  return PlannerError::success();
}

// ---- driver ---------------------------------------------------------------

void GearPlanner::record(const std::string& name, const PlannerError& out,
                         const PlannerState& state) {
  ++stats_.submodule_calls;
  ++stats_.calls_by_submodule[name];
  PlanLogEntry e;
  e.iteration = stats_.submodule_calls;
  e.submodule = name;
  e.error_code = out.ok() ? "ok" : "infeasible";
  e.qps_range_index = out.qps_range_index;
  e.bottleneck_model = out.bottleneck_model;
  e.plan_hash = plan_hash(state.plan);
  stats_.log.push_back(std::move(e));
}

GearPlan GearPlanner::optimize() {
  const auto t0 = std::chrono::steady_clock::now();
  stats_ = PlannerStats{};
  PlannerState state = init_plan();
  PlannerError err = PlannerError::success();
  int index = 0;
  std::string snapshot;
  bool clean_cycle = false;

  auto finish_stats = [&] {
    stats_.candidate_count = state.candidates.size();
    stats_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  while (true) {
    if (stats_.submodule_calls >= config_.max_submodule_calls) {
      finish_stats();
      throw Error("gear planner did not converge within " +
                  std::to_string(config_.max_submodule_calls) + " submodule calls");
    }
    if (index == 0 && err.ok()) {
      snapshot = dump_plan(state.plan);
      clean_cycle = true;
    }
    PlannerError out;
    try {
      switch (index) {
        case 0: out = sp1_search_cascades(err, state); break;
        case 1: out = sp2_assign_cascades(err, state); break;
        case 2: out = sp3_place_models(err, state); break;
        default: out = sp4_tune_batch_sizes(err, state); break;
      }
    } catch (const UserInfeasible&) {
      record(kSubmodules[index], PlannerError::infeasible(-1, "user infeasible"), state);
      finish_stats();
      throw;
    }
    const bool was_feasible = stats_.first_feasible_call.has_value();
    record(kSubmodules[index], out, state);
    if (state.feasible_once && !was_feasible) {
      stats_.first_feasible_call = stats_.submodule_calls;
    }
    if (config_.instrument && state.feasible_once) {
      if (!plan_feasible(state.plan)) ++stats_.feasibility_regressions;
      stats_.objective_trace.push_back(non_slo_badness(state.plan));
    }

    if (!out.ok()) {
      clean_cycle = false;
      index -= 1;
      if (index < 0) {
        finish_stats();
        throw UserInfeasible();
      }
    } else {
      if (index == 3 && clean_cycle && state.feasible_once &&
          dump_plan(state.plan) == snapshot) {
        break;
      }
      index = (index + 1) % 4;
    }
    err = out;
  }
  finish_stats();
  return state.plan;
}

GearPlan optimize(const ProfileSet& profiles, const std::vector<Device>& devices,
                  const ValidationSet& validation, const QpsDistribution& dist,
                  const Slo& slo, double qps_max, int n_ranges, std::uint64_t seed,
                  PlannerConfig config, PlannerStats* stats) {
  config.seed = seed;
  GearPlanner planner(profiles, devices, validation, dist, slo, qps_max, n_ranges, config);
  try {
    GearPlan plan = planner.optimize();
    if (stats) *stats = planner.stats();
    return plan;
  } catch (...) {
    if (stats) *stats = planner.stats();
    throw;
  }
}

std::string plan_hash(const GearPlan& plan) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(dump_plan(plan))));
  return buf;
}

}  // namespace cascadeserve
