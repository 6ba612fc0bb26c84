#pragma once

#include <map>
#include <optional>
#include <string>

#include "cascadeserve/domain.hpp"

namespace cascadeserve {

/// QPS assigned to each replica of the demanded models.
struct LoadAssignment {
  std::map<std::string, double> q;
  /// The utilization bound the assignment was solved under.
  double achieved_u = 0.0;
  /// Largest per-device busy fraction the assignment actually produces.
  double max_busy = 0.0;
};

/// Busy fraction of every device under an assignment: sum of q_r times the
/// batch-1 per-sample runtime in seconds.
std::map<std::string, double> device_busy(const Placement& placement,
                                          const LoadAssignment& assignment,
                                          const ProfileSet& profiles);

/// Minimizes the total assigned QPS such that every demanded model's replicas
/// jointly cover its demand and no device exceeds busy fraction u. Among
/// optima, the one with the smallest maximum device busy fraction is chosen.
/// Returns nullopt when infeasible. Throws on u outside (0, 1] or unknown
/// models.
std::optional<LoadAssignment> solve_lp(const Placement& placement,
                                       const std::map<std::string, double>& demands,
                                       const ProfileSet& profiles, double u);

struct MinUtilization {
  double u_min = 0.0;
  LoadAssignment assignment;
};

/// Bisection tolerance on u.
constexpr double kUtilizationTolerance = 0.01;

/// Smallest u (within kUtilizationTolerance, never below the true minimum)
/// at which solve_lp is feasible. nullopt iff infeasible at u = 1.
std::optional<MinUtilization> min_utilization(
    const Placement& placement, const std::map<std::string, double>& demands,
    const ProfileSet& profiles);

/// Largest total QPS the placement can absorb when each model receives the
/// given fraction of it, with every device at most fully busy. 0 when a model
/// with a positive fraction has no replica.
double max_throughput(const Placement& placement,
                      const std::map<std::string, double>& fractions,
                      const ProfileSet& profiles);

}  // namespace cascadeserve
