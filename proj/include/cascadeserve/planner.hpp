#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascadeserve/cascade_eval.hpp"
#include "cascadeserve/domain.hpp"
#include "cascadeserve/sim_engine.hpp"

namespace cascadeserve {

/// Raised when no plan can meet the SLO on the given hardware.
class UserInfeasible : public Error {
 public:
  UserInfeasible()
      : Error("impossible to meet the SLO given the provided hardware resource") {}
};

enum class ErrorCode { kOk, kInfeasible };

struct PlannerError {
  ErrorCode code = ErrorCode::kOk;
  std::optional<int> qps_range_index;
  std::optional<std::string> bottleneck_model;
  std::string reason;

  bool ok() const { return code == ErrorCode::kOk; }
  static PlannerError success() { return {}; }
  static PlannerError infeasible(int range, std::string why,
                                 std::optional<std::string> model = std::nullopt) {
    return {ErrorCode::kInfeasible, range, std::move(model), std::move(why)};
  }
};

/// Settings for the constant-rate probe that decides whether a gear carries
/// its range's top QPS.
struct ProbeConfig {
  Micros warmup_us = 2 * kMicrosPerSecond;
  Micros measure_us = 10 * kMicrosPerSecond;
  Micros measure_period_us = 100'000;
  std::uint64_t seed = 0;
};

struct RangeProbe {
  double qps = 0.0;
  Micros p95_us = 0;
  std::int64_t completed = 0;
  std::int64_t backlog = 0;  // queued at probe end
  double backlog_allowance = 0.0;
  bool throughput_ok = true;
  std::optional<std::string> bottleneck_model;
};

/// Replays a constant-rate trace at the range's top QPS with the range's gear
/// pinned. p95 covers requests arriving after the warm-up; throughput is
/// insufficient when the end-of-probe backlog exceeds twice the arrivals of
/// one measurement period plus the slack the minimum queue lengths allow.
RangeProbe probe_range(const GearPlan& plan, int range, const ProfileSet& profiles,
                       const ValidationSet& validation, const ProbeConfig& config = {});

/// Whether a probe meets the plan's SLO at that range. Accuracy SLOs only need
/// sufficient throughput here; their accuracy target is a plan-wide check.
bool probe_meets_slo(const RangeProbe& probe, const Slo& slo);

struct CandidateCascade {
  Cascade cascade;
  CascadeEval eval;
  /// Completions per second under overload at the placement of the last probe.
  double throughput = 0.0;
};

struct PlannerConfig {
  int n_samples = 2000;
  int grid_levels = 10;
  std::uint64_t seed = 0;
  ProbeConfig probe;
  /// Max replication, no pruning, minimum queue length fixed at 1.
  bool restricted = false;
  /// Score pruning with the remaining overallocation (the literal formula)
  /// instead of the relieved overallocation.
  bool literal_prune_utility = false;
  /// Re-check full-plan feasibility after every submodule call.
  bool instrument = false;
  int max_submodule_calls = 200000;
};

struct PlannerState {
  GearPlan plan;
  std::vector<Device> devices;
  std::map<std::string, CandidateCascade> candidates;  // by cascade key
  std::map<std::string, int> forced_replicas;
  std::vector<int> downgrade_index;
  std::vector<int> downgrades;
  bool assigned = false;
  bool feasible_once = false;
  int sp1_calls = 0;
};

struct PlanLogEntry {
  int iteration = 0;
  std::string submodule;
  std::string error_code;
  std::optional<int> qps_range_index;
  std::optional<std::string> bottleneck_model;
  std::string plan_hash;
};

struct PlannerStats {
  int submodule_calls = 0;
  std::map<std::string, int> calls_by_submodule;
  int downgrades = 0;
  std::size_t candidate_count = 0;
  std::optional<int> first_feasible_call;
  /// Instrumented runs: submodule calls after first feasibility that left
  /// an infeasible plan behind.
  int feasibility_regressions = 0;
  /// Instrumented runs: non-SLO metric after every post-feasibility call.
  std::vector<double> objective_trace;
  std::vector<PlanLogEntry> log;
  double wall_seconds = 0.0;
};

class GearPlanner {
 public:
  GearPlanner(const ProfileSet& profiles, std::vector<Device> devices,
              const ValidationSet& validation, QpsDistribution dist, Slo slo,
              double qps_max, int n_ranges, PlannerConfig config = {});

  /// Every model on every device (memory may be overcommitted), minimum
  /// queue lengths of 1, cascades unassigned.
  PlannerState init_plan() const;

  PlannerError sp1_search_cascades(const PlannerError& err, PlannerState& state);
  PlannerError sp2_assign_cascades(const PlannerError& err, PlannerState& state);
  PlannerError sp3_place_models(const PlannerError& err, PlannerState& state);
  PlannerError sp4_tune_batch_sizes(const PlannerError& err, PlannerState& state);

  /// Runs the submodules round-robin, moving forward on ok and backward on
  /// infeasible, until a full cycle leaves the plan unchanged. Throws
  /// UserInfeasible when an error escapes the first submodule.
  GearPlan optimize();

  /// Memory, per-range probes and (for accuracy SLOs) the weighted accuracy.
  bool plan_feasible(const GearPlan& plan);
  /// The metric the SLO does not constrain, oriented so lower is better:
  /// negated plan accuracy under a latency SLO, weighted p95 under an
  /// accuracy SLO.
  double non_slo_badness(const GearPlan& plan);

  /// Candidates in SLO-compatible downgrade order (Pareto set of the union).
  /// Under an accuracy SLO, cascades below the target are left out, so every
  /// gear meets the target on its own.
  std::vector<const CandidateCascade*> downgrade_order(const PlannerState& state) const;
  bool can_downgrade(const PlannerState& state, int range) const;

  const PlannerStats& stats() const { return stats_; }
  const CascadeEval& eval_of(const Cascade& cascade);
  const std::map<std::string, CascadeEval>& evals() const { return evals_; }
  const ThresholdGrid& grid() const { return grid_; }
  const QpsDistribution& distribution() const { return dist_; }
  const PlannerConfig& config() const { return config_; }

  /// Load weights for one gear on a placement via min_utilization at the
  /// range's top QPS. nullopt when the load balancer is infeasible.
  std::optional<std::map<std::string, double>> balance_gear(const Placement& placement,
                                                            const Cascade& cascade,
                                                            double qps);

  RangeProbe probe(const GearPlan& plan, int range);

 private:
  struct PruneOutcome {
    std::optional<Placement> placement;
    std::vector<std::string> blocked_models;
  };

  bool slo_before(const CandidateCascade& a, const CandidateCascade& b) const;
  PruneOutcome prune_placement(const PlannerState& state);
  double probe_throughput(const Placement& placement, const Cascade& cascade);
  std::optional<std::string> first_blocked_range_model(const GearPlan& plan) const;
  /// Tunes one range's first-stage minimum queue length in place. Returns the
  /// passing probe, or the last failing one.
  std::pair<bool, RangeProbe> tune_range(GearPlan& plan, int range);
  int pick_accuracy_range(const PlannerState& state) const;
  int pick_failing_range(const PlannerState& state,
                         const std::vector<std::string>& blocked_models) const;
  double weighted_accuracy(const GearPlan& plan);
  void rebuild_queue_lengths(GearPlan& plan, const GearPlan& previous) const;
  void record(const std::string& name, const PlannerError& out, const PlannerState& state);

  const ProfileSet& profiles_;
  std::vector<Device> devices_;
  const ValidationSet& validation_;
  QpsDistribution dist_;
  Slo slo_;
  double qps_max_;
  int n_ranges_;
  PlannerConfig config_;
  ThresholdGrid grid_;
  std::map<std::string, CascadeEval> evals_;
  std::map<std::string, RangeProbe> probe_cache_;
  PlannerStats stats_;
};

/// Convenience wrapper around GearPlanner::optimize.
GearPlan optimize(const ProfileSet& profiles, const std::vector<Device>& devices,
                  const ValidationSet& validation, const QpsDistribution& dist,
                  const Slo& slo, double qps_max, int n_ranges, std::uint64_t seed,
                  PlannerConfig config = {}, PlannerStats* stats = nullptr);

/// Stable hex digest of a plan's serialized form.
std::string plan_hash(const GearPlan& plan);

}  // namespace cascadeserve
