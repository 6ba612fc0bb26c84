#include "cascadeserve/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

namespace cascadeserve {

std::vector<SampleOutcome> lookup_outcomes(const std::string& model_id,
                                           std::span<const std::int64_t> sample_ids,
                                           const ValidationSet& validation) {
  if (validation.empty()) throw Error("validation set is empty");
  const auto& col = validation.column(model_id);
  const auto n = static_cast<std::int64_t>(validation.size());
  std::vector<SampleOutcome> out;
  out.reserve(sample_ids.size());
  for (std::int64_t id : sample_ids) {
    const auto idx = static_cast<std::size_t>(((id % n) + n) % n);
    out.push_back({col.certainty[idx], col.correct[idx] != 0});
  }
  return out;
}

std::int64_t SimMetrics::model_volume(const std::string& model_id) const {
  std::int64_t total = 0;
  auto it = per_model_batches.find(model_id);
  if (it == per_model_batches.end()) return 0;
  for (const auto& [size, count] : it->second) total += size * count;
  return total;
}

int maybe_switch_gear(double measured_qps, std::int64_t first_stage_queue_len,
                      int current_gear, const GearPlan& plan, double alpha) {
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  const int candidate = plan.range_index(measured_qps);
  if (candidate < current_gear &&
      measured_qps < alpha * static_cast<double>(first_stage_queue_len)) {
    return current_gear;
  }
  return candidate;
}

Engine::Engine(const GearPlan& plan, const ProfileSet& profiles,
               const ValidationSet& validation, EngineOptions options)
    : plan_(plan),
      profiles_(profiles),
      validation_(validation),
      options_(options),
      rng_(options.seed) {
  plan_.validate(profiles_);
  if (validation_.empty()) throw Error("engine needs a non-empty validation set");
  for (const auto& g : plan_.gears) {
    for (const auto& s : g.cascade.stages) validation_.column(s.model_id);
  }
  if (options_.measure_period_us <= 0) throw Error("measurement period must be positive");
  for (const auto& d : plan_.placement.devices) devices_.push_back({d.device_id, false, {}});
  for (const auto& r : plan_.placement.replicas) {
    std::size_t dev = 0;
    while (devices_[dev].id != r.device_id) ++dev;
    const std::size_t idx = replicas_.size();
    replicas_.push_back({&r, dev, profiles_.at(r.model_id).max_profiled_batch(), {}});
    devices_[dev].replicas.push_back(idx);
    replicas_by_model_[r.model_id].push_back(idx);
  }
  if (options_.fixed_gear) {
    if (*options_.fixed_gear < 0 || *options_.fixed_gear >= plan_.n_ranges) {
      throw Error("fixed gear index out of range");
    }
    gear_ = *options_.fixed_gear;
  }
}

std::size_t Engine::route(const std::string& model_id) {
  auto it = replicas_by_model_.find(model_id);
  if (it == replicas_by_model_.end() || it->second.empty()) {
    throw Error("no replica of model " + model_id + " in the placement");
  }
  const auto& candidates = it->second;
  if (candidates.size() == 1) return candidates.front();
  std::vector<double> weights;
  double total = 0.0;
  for (std::size_t r : candidates) {
    const auto w = gear().load_weights.find(replicas_[r].replica->replica_id);
    weights.push_back(w == gear().load_weights.end() ? 0.0 : std::max(0.0, w->second));
    total += weights.back();
  }
  if (!(total > 0.0)) {
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    return candidates[pick(rng_)];
  }
  std::uniform_real_distribution<double> draw(0.0, total);
  double x = draw(rng_);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (x < weights[k]) return candidates[k];
    x -= weights[k];
  }
  // Rounding fell off the end; take the last replica with positive weight.
  for (std::size_t k = candidates.size(); k-- > 0;) {
    if (weights[k] > 0.0) return candidates[k];
  }
  return candidates.back();
}

void Engine::enqueue(const std::string& model_id, QueueItem item, Micros now) {
  item.enqueue_us = now;
  replicas_[route(model_id)].queue.push_back(std::move(item));
}

void Engine::on_arrival(const Request& request, Micros now) {
  ++submitted_;
  ++arrivals_since_tick_;
  RequestRecord rec;
  rec.request_id = request.request_id;
  rec.sample_id = request.sample_id;
  rec.arrival_us = request.arrival_us;
  record_index_[request.request_id] = metrics_.requests.size();
  metrics_.requests.push_back(std::move(rec));
  enqueue(gear().cascade.first_model(), QueueItem{request, now, 0}, now);
}

std::vector<BatchDispatch> Engine::poll(Micros now, std::optional<std::size_t> device) {
  std::vector<BatchDispatch> out;
  const Cascade& cascade = gear().cascade;
  for (std::size_t d = 0; d < devices_.size(); ++d) {
    if (device && *device != d) continue;
    DeviceState& dev = devices_[d];
    if (dev.busy) continue;
    // Earliest stage first (models outside the current cascade drain first),
    // then the longest queue, then the lowest replica id.
    std::optional<std::size_t> best;
    std::tuple<int, std::size_t, std::string> best_key;
    for (std::size_t r : dev.replicas) {
      const ReplicaState& rs = replicas_[r];
      if (rs.queue.empty()) continue;
      const auto& rid = rs.replica->replica_id;
      if (rs.queue.size() < static_cast<std::size_t>(gear().min_queue_for(rid))) continue;
      const std::tuple<int, std::size_t, std::string> key{
          cascade.stage_of(rs.replica->model_id),
          std::numeric_limits<std::size_t>::max() - rs.queue.size(), rid};
      if (!best || key < best_key) {
        best = r;
        best_key = key;
      }
    }
    if (!best) continue;
    ReplicaState& rs = replicas_[*best];
    const auto size = std::min<std::size_t>(rs.queue.size(), static_cast<std::size_t>(rs.max_batch));
    BatchDispatch batch;
    batch.batch_id = next_batch_id_++;
    batch.device = d;
    batch.replica = *best;
    batch.device_id = dev.id;
    batch.replica_id = rs.replica->replica_id;
    batch.model_id = rs.replica->model_id;
    batch.items.assign(rs.queue.begin(), rs.queue.begin() + static_cast<std::ptrdiff_t>(size));
    rs.queue.erase(rs.queue.begin(), rs.queue.begin() + static_cast<std::ptrdiff_t>(size));
    batch.start_us = now;
    batch.runtime_us = profiles_.at(batch.model_id).runtime_us(static_cast<int>(size));
    dev.busy = true;
    in_flight_ += static_cast<std::int64_t>(size);
    ++metrics_.per_model_batches[batch.model_id][static_cast<int>(size)];
    auto& stats = metrics_.model_stats[batch.model_id];
    for (const auto& item : batch.items) stats.total_wait_us += now - item.enqueue_us;
    out.push_back(std::move(batch));
  }
  return out;
}

void Engine::complete(const QueueItem& item, bool correct, Micros now) {
  auto it = record_index_.find(item.request.request_id);
  if (it != record_index_.end()) {
    RequestRecord& rec = metrics_.requests[it->second];
    rec.completion_us = now;
    rec.stages_executed = item.stages_executed;
    rec.correct = correct;
    metrics_.latencies_us.push_back(rec.latency_us());
  }
  ++metrics_.completed;
  ++completions_by_gear_[gear_];
}

void Engine::on_batch_complete(const BatchDispatch& batch,
                               std::span<const SampleOutcome> outcomes, Micros now) {
  if (outcomes.size() != batch.items.size()) {
    throw Error("batch outcome count does not match batch size");
  }
  devices_.at(batch.device).busy = false;
  in_flight_ -= static_cast<std::int64_t>(batch.items.size());
  if (options_.record_batches) {
    metrics_.batches.push_back({batch.device_id, batch.replica_id, batch.model_id,
                                batch.start_us, now, static_cast<int>(batch.items.size())});
  }
  auto& stats = metrics_.model_stats[batch.model_id];
  stats.samples += static_cast<std::int64_t>(batch.items.size());
  stats.total_service_us += (now - batch.start_us) * static_cast<Micros>(batch.items.size());

  const Cascade& cascade = gear().cascade;
  const int stage = cascade.stage_of(batch.model_id);
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    QueueItem item = batch.items[i];
    ++item.stages_executed;
    if (options_.record_paths) {
      auto it = record_index_.find(item.request.request_id);
      if (it != record_index_.end()) {
        metrics_.requests[it->second].path.push_back(
            {batch.model_id, batch.device_id, item.enqueue_us, batch.start_us, now});
      }
    }
    const bool forward = stage >= 0 && static_cast<std::size_t>(stage) + 1 < cascade.size() &&
                         outcomes[i].certainty < cascade.stages[stage].threshold;
    if (forward) {
      enqueue(cascade.stages[stage + 1].model_id, std::move(item), now);
    } else {
      complete(item, outcomes[i].correct, now);
    }
  }
}

void Engine::on_measurement(Micros now) {
  const Micros elapsed = now - last_tick_us_;
  const double seconds = static_cast<double>(elapsed > 0 ? elapsed : options_.measure_period_us) /
                         kMicrosPerSecond;
  const double qps = static_cast<double>(arrivals_since_tick_) / seconds;
  arrivals_since_tick_ = 0;
  last_tick_us_ = now;

  Measurement m;
  m.time_us = now;
  m.measured_qps = qps;
  m.candidate = plan_.range_index(qps);
  m.gear_before = gear_;
  m.q0 = first_stage_queue_length();
  int next = gear_;
  if (!options_.fixed_gear) next = maybe_switch_gear(qps, m.q0, gear_, plan_, options_.alpha);
  m.gear_after = next;
  metrics_.measurements.push_back(m);
  if (next != gear_) {
    metrics_.per_range_active_us[gear_] += now - gear_since_us_;
    gear_since_us_ = now;
    metrics_.gear_events.push_back({now, gear_, next, qps, m.q0});
    gear_ = next;
  }
}

void Engine::mark_trace_end(Micros now) {
  metrics_.trace_end_us = now;
  metrics_.queued_at_trace_end = queued();
  for (const auto& rs : replicas_) {
    metrics_.model_stats[rs.replica->model_id].queued_at_trace_end +=
        static_cast<std::int64_t>(rs.queue.size());
  }
}

SimMetrics Engine::finish(Micros now) {
  metrics_.per_range_active_us[gear_] += now - gear_since_us_;
  gear_since_us_ = now;
  metrics_.per_range_throughput.clear();
  for (const auto& [g, active] : metrics_.per_range_active_us) {
    if (active <= 0) continue;
    const auto it = completions_by_gear_.find(g);
    const double done = it == completions_by_gear_.end() ? 0.0 : static_cast<double>(it->second);
    metrics_.per_range_throughput[g] = done / (static_cast<double>(active) / kMicrosPerSecond);
  }
  metrics_.arrivals = submitted_;
  metrics_.dropped_or_backlogged = submitted_ - metrics_.completed;
  metrics_.horizon_us = now;
  return metrics_;
}

std::int64_t Engine::queued() const {
  std::int64_t total = 0;
  for (const auto& rs : replicas_) total += static_cast<std::int64_t>(rs.queue.size());
  return total;
}

std::int64_t Engine::first_stage_queue_length() const {
  std::int64_t total = 0;
  auto it = replicas_by_model_.find(gear().cascade.first_model());
  if (it == replicas_by_model_.end()) return 0;
  for (std::size_t r : it->second) total += static_cast<std::int64_t>(replicas_[r].queue.size());
  return total;
}

bool Engine::has_busy_device() const {
  return std::any_of(devices_.begin(), devices_.end(), [](const auto& d) { return d.busy; });
}

bool Engine::can_dispatch() const {
  for (const auto& dev : devices_) {
    if (dev.busy) continue;
    for (std::size_t r : dev.replicas) {
      const auto& rs = replicas_[r];
      if (!rs.queue.empty() &&
          rs.queue.size() >= static_cast<std::size_t>(gear().min_queue_for(rs.replica->replica_id))) {
        return true;
      }
    }
  }
  return false;
}

std::size_t Engine::queue_length(const std::string& replica_id) const {
  for (const auto& rs : replicas_) {
    if (rs.replica->replica_id == replica_id) return rs.queue.size();
  }
  throw Error("unknown replica " + replica_id);
}

SimMetrics run(const GearPlan& plan, const WorkloadTrace& trace,
               const ValidationSet& validation, const ProfileSet& profiles,
               const RunOptions& options) {
  trace.validate();
  Engine engine(plan, profiles, validation, options.engine);
  const Micros period = options.engine.measure_period_us;
  const Micros drain_until = trace.duration_us + options.drain_limit_us;

  using Pending = std::pair<Micros, std::int64_t>;  // (end time, batch id)
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> completions;
  std::map<std::int64_t, BatchDispatch> running;
  std::size_t next_arrival = 0;
  Micros next_tick = period;
  bool trace_ended = false;
  Micros now = 0;
  constexpr Micros kNever = std::numeric_limits<Micros>::max();

  auto dispatch = [&](Micros t) {
    for (auto& b : engine.poll(t)) {
      completions.emplace(t + b.runtime_us, b.batch_id);
      running.emplace(b.batch_id, std::move(b));
    }
  };

  while (true) {
    const Micros t_done = completions.empty() ? kNever : completions.top().first;
    const Micros t_arr =
        next_arrival < trace.arrivals.size() ? trace.arrivals[next_arrival] : kNever;
    const Micros t_end = trace_ended ? kNever : trace.duration_us;
    Micros t_tick = kNever;
    const bool idle_after_end = trace_ended && completions.empty() &&
                                (engine.queued() == 0 || options.engine.fixed_gear.has_value());
    if (!idle_after_end && next_tick <= drain_until) t_tick = next_tick;

    const Micros t = std::min({t_done, t_arr, t_end, t_tick});
    if (t == kNever || t > drain_until) break;
    now = t;
    if (t == t_done) {
      const auto id = completions.top().second;
      completions.pop();
      auto node = running.extract(id);
      const BatchDispatch& batch = node.mapped();
      const auto ids = batch.sample_ids();
      const auto outcomes = lookup_outcomes(batch.model_id, ids, validation);
      engine.on_batch_complete(batch, outcomes, now);
    } else if (t == t_tick) {
      engine.on_measurement(now);
      next_tick += period;
    } else if (t == t_end) {
      engine.mark_trace_end(now);
      trace_ended = true;
    } else {
      const auto k = static_cast<std::int64_t>(next_arrival);
      engine.on_arrival(Request{k, k, t_arr}, now);
      ++next_arrival;
    }
    dispatch(now);
  }
  return engine.finish(std::max(now, trace.duration_us));
}

Micros percentile(std::vector<Micros> values, double p) {
  if (values.empty()) throw Error("percentile of an empty sample");
  if (!(p > 0.0 && p < 100.0)) throw Error("percentile rank must lie in (0, 100)");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

std::vector<Micros> latencies_between(const SimMetrics& metrics, Micros from_us,
                                      Micros to_us) {
  std::vector<Micros> out;
  for (const auto& r : metrics.requests) {
    if (r.completed() && r.arrival_us >= from_us && r.arrival_us < to_us) {
      out.push_back(r.latency_us());
    }
  }
  return out;
}

double estimate_plan_accuracy(const GearPlan& plan, const QpsDistribution& dist,
                              const std::map<std::string, CascadeEval>& evals) {
  if (dist.size() != plan.gears.size()) {
    throw Error("QPS distribution has " + std::to_string(dist.size()) +
                " weights for " + std::to_string(plan.gears.size()) + " ranges");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < plan.gears.size(); ++i) {
    const auto key = plan.gears[i].cascade.key();
    auto it = evals.find(key);
    if (it == evals.end()) throw Error("no evaluation for cascade " + key);
    acc += dist.weights[i] * it->second.accuracy;
  }
  return acc;
}

DistributionCheck monitor_distribution(const std::vector<double>& observed,
                                       const QpsDistribution& assumed,
                                       double tolerance) {
  if (observed.size() != assumed.size()) {
    throw Error("observed and assumed distributions differ in length");
  }
  double sum = 0.0;
  for (double f : observed) sum += f;
  if (std::abs(sum - 1.0) > 1e-6) throw Error("observed fractions do not sum to 1");
  DistributionCheck check;
  check.observed = observed;
  check.assumed = assumed.weights;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    check.total_variation += std::abs(observed[i] - assumed.weights[i]);
  }
  check.total_variation *= 0.5;
  check.ok = check.total_variation <= tolerance;
  return check;
}

}  // namespace cascadeserve
