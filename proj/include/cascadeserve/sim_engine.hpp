#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cascadeserve/domain.hpp"

namespace cascadeserve {

enum class ClockMode { kVirtual, kWall };

/// Virtual clocks jump to the next event; wall clocks read steady time
/// relative to construction.
class Clock {
 public:
  explicit Clock(ClockMode mode)
      : mode_(mode), origin_(std::chrono::steady_clock::now()) {}

  ClockMode mode() const { return mode_; }
  Micros now() const {
    if (mode_ == ClockMode::kVirtual) return virtual_now_;
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now() - origin_)
        .count();
  }
  /// Virtual mode only; time never moves backwards.
  void advance_to(Micros t) {
    if (mode_ != ClockMode::kVirtual) throw Error("cannot advance a wall clock");
    if (t < virtual_now_) throw Error("virtual clock cannot move backwards");
    virtual_now_ = t;
  }
  std::chrono::steady_clock::time_point to_time_point(Micros t) const {
    return origin_ + std::chrono::microseconds(t);
  }

 private:
  ClockMode mode_;
  std::chrono::steady_clock::time_point origin_;
  Micros virtual_now_ = 0;
};

struct Request {
  std::int64_t request_id = 0;
  std::int64_t sample_id = 0;  // cycled over the validation set
  Micros arrival_us = 0;
};

struct QueueItem {
  Request request;
  Micros enqueue_us = 0;
  int stages_executed = 0;
};

struct SampleOutcome {
  double certainty = 0.0;
  bool correct = false;
};

/// Recorded certainty and correctness of one model on a batch of samples.
/// Shared by the virtual driver and the mock executors.
std::vector<SampleOutcome> lookup_outcomes(const std::string& model_id,
                                           std::span<const std::int64_t> sample_ids,
                                           const ValidationSet& validation);

struct BatchDispatch {
  std::int64_t batch_id = 0;
  std::size_t device = 0;
  std::size_t replica = 0;
  std::string device_id;
  std::string replica_id;
  std::string model_id;
  std::vector<QueueItem> items;
  Micros start_us = 0;
  Micros runtime_us = 0;

  std::vector<std::int64_t> sample_ids() const {
    std::vector<std::int64_t> ids;
    ids.reserve(items.size());
    for (const auto& it : items) ids.push_back(it.request.sample_id);
    return ids;
  }
};

struct StageVisit {
  std::string model_id;
  std::string device_id;
  Micros enqueue_us = 0;
  Micros start_us = 0;
  Micros end_us = 0;
};

struct RequestRecord {
  std::int64_t request_id = 0;
  std::int64_t sample_id = 0;
  Micros arrival_us = 0;
  Micros completion_us = -1;  // -1 while unfinished
  int stages_executed = 0;
  bool correct = false;
  std::vector<StageVisit> path;  // filled only when paths are recorded

  bool completed() const { return completion_us >= 0; }
  Micros latency_us() const { return completion_us - arrival_us; }
};

struct GearEvent {
  Micros time_us = 0;
  int from = 0;
  int to = 0;
  double measured_qps = 0.0;
  std::int64_t q0 = 0;
};

/// One producer measurement and the decision taken on it.
struct Measurement {
  Micros time_us = 0;
  double measured_qps = 0.0;
  int candidate = 0;
  int gear_before = 0;
  int gear_after = 0;
  std::int64_t q0 = 0;
};

struct BatchRecord {
  std::string device_id;
  std::string replica_id;
  std::string model_id;
  Micros start_us = 0;
  Micros end_us = 0;
  int size = 0;
};

struct ModelStats {
  std::int64_t samples = 0;
  Micros total_wait_us = 0;     // enqueue to dispatch
  Micros total_service_us = 0;  // batch runtime, per sample
  std::int64_t queued_at_trace_end = 0;
};

struct SimMetrics {
  std::int64_t arrivals = 0;
  std::int64_t completed = 0;
  std::int64_t dropped_or_backlogged = 0;
  /// End-to-end latency of each completed request, in completion order.
  std::vector<Micros> latencies_us;
  std::map<std::string, std::map<int, std::int64_t>> per_model_batches;
  /// Completions per second of active time, keyed by gear/range index.
  std::map<int, double> per_range_throughput;
  std::map<int, Micros> per_range_active_us;
  std::vector<RequestRecord> requests;
  std::vector<GearEvent> gear_events;
  std::vector<Measurement> measurements;
  std::vector<BatchRecord> batches;
  std::map<std::string, ModelStats> model_stats;
  /// Items waiting in queues (not executing) when the trace ended.
  std::int64_t queued_at_trace_end = 0;
  Micros trace_end_us = 0;
  Micros horizon_us = 0;

  /// Model-sample executions, summed over batches.
  std::int64_t model_volume(const std::string& model_id) const;
};

struct EngineOptions {
  Micros measure_period_us = 100'000;
  double alpha = 8.0;
  std::uint64_t seed = 0;
  /// Pin one gear and disable switching.
  std::optional<int> fixed_gear;
  bool record_paths = false;
  bool record_batches = true;
};

/// Candidate is the plan's gear for measured_qps. A downgrade (lower range)
/// is refused while measured_qps < alpha * first_stage_queue_len.
int maybe_switch_gear(double measured_qps, std::int64_t first_stage_queue_len,
                      int current_gear, const GearPlan& plan, double alpha);

/// Queue/device state machine. The virtual-time driver (run) and the
/// wall-clock serving runtime both drive the same transitions; the caller
/// supplies `now` and is responsible for mutual exclusion.
class Engine {
 public:
  Engine(const GearPlan& plan, const ProfileSet& profiles,
         const ValidationSet& validation, EngineOptions options);

  /// Routes a new request to a first-stage replica of the current gear.
  void on_arrival(const Request& request, Micros now);

  /// Starts a batch on every idle device (optionally only `device`) that has a
  /// queue at or above its minimum length. The chosen devices become busy.
  std::vector<BatchDispatch> poll(Micros now, std::optional<std::size_t> device = {});

  /// Frees the device, then completes or forwards each sample.
  void on_batch_complete(const BatchDispatch& batch,
                         std::span<const SampleOutcome> outcomes, Micros now);

  /// Producer tick: measures QPS since the previous tick and applies the
  /// gear-switch rule.
  void on_measurement(Micros now);

  /// Snapshots per-model queue contents; called once when the trace ends.
  void mark_trace_end(Micros now);

  /// Closes the books at `now`: unfinished requests count as backlogged.
  SimMetrics finish(Micros now);

  int current_gear() const { return gear_; }
  std::int64_t queued() const;
  std::int64_t in_flight() const { return in_flight_; }
  std::int64_t submitted() const { return submitted_; }
  std::int64_t completed() const { return metrics_.completed; }
  std::int64_t first_stage_queue_length() const;
  bool has_busy_device() const;
  bool can_dispatch() const;
  std::size_t num_devices() const { return devices_.size(); }
  const std::string& device_id(std::size_t d) const { return devices_[d].id; }
  std::size_t queue_length(const std::string& replica_id) const;
  const SimMetrics& metrics() const { return metrics_; }
  const GearPlan& plan() const { return plan_; }

 private:
  struct DeviceState {
    std::string id;
    bool busy = false;
    std::vector<std::size_t> replicas;
  };
  struct ReplicaState {
    const Replica* replica;
    std::size_t device;
    int max_batch;
    std::deque<QueueItem> queue;
  };

  const Gear& gear() const { return plan_.gears[static_cast<std::size_t>(gear_)]; }
  std::size_t route(const std::string& model_id);
  void enqueue(const std::string& model_id, QueueItem item, Micros now);
  void complete(const QueueItem& item, bool correct, Micros now);

  const GearPlan& plan_;
  const ProfileSet& profiles_;
  const ValidationSet& validation_;
  EngineOptions options_;
  std::mt19937_64 rng_;
  std::vector<DeviceState> devices_;
  std::vector<ReplicaState> replicas_;
  std::map<std::string, std::vector<std::size_t>> replicas_by_model_;
  int gear_ = 0;
  std::int64_t next_batch_id_ = 0;
  std::int64_t in_flight_ = 0;
  std::int64_t submitted_ = 0;
  std::int64_t arrivals_since_tick_ = 0;
  Micros last_tick_us_ = 0;
  Micros gear_since_us_ = 0;
  std::map<int, std::int64_t> completions_by_gear_;
  std::map<std::int64_t, std::size_t> record_index_;
  SimMetrics metrics_;
};

struct RunOptions {
  EngineOptions engine;
  /// How long to keep draining after the trace ends before counting the
  /// leftovers as backlogged.
  Micros drain_limit_us = 30 * kMicrosPerSecond;
};

/// Deterministic virtual-time replay of a trace against a plan. At equal
/// timestamps, completions run before measurement ticks, which run before
/// arrivals. Request k carries sample_id k.
SimMetrics run(const GearPlan& plan, const WorkloadTrace& trace,
               const ValidationSet& validation, const ProfileSet& profiles,
               const RunOptions& options = {});

/// Nearest-rank percentile, p in (0, 100).
Micros percentile(std::vector<Micros> values, double p);

/// Latencies of completed requests that arrived in [from_us, to_us).
std::vector<Micros> latencies_between(const SimMetrics& metrics, Micros from_us,
                                      Micros to_us);

/// Time-weighted plan accuracy: sum over ranges of weight_i times the
/// accuracy of gear i's cascade. `evals` is keyed by Cascade::key().
double estimate_plan_accuracy(const GearPlan& plan, const QpsDistribution& dist,
                              const std::map<std::string, CascadeEval>& evals);

struct DistributionCheck {
  bool ok = true;
  double total_variation = 0.0;
  std::vector<double> observed;
  std::vector<double> assumed;
};

/// Flags a deviation when the total variation distance between observed and
/// assumed range frequencies exceeds the tolerance.
DistributionCheck monitor_distribution(const std::vector<double>& observed,
                                       const QpsDistribution& assumed,
                                       double tolerance);

}  // namespace cascadeserve
