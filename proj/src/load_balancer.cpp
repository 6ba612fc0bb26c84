#include "cascadeserve/load_balancer.hpp"

#include <algorithm>
#include <vector>

#include "cascadeserve/simplex.hpp"

namespace cascadeserve {

namespace {

struct Problem {
  std::vector<const Replica*> vars;
  std::vector<double> runtime_s;
  std::vector<std::string> models;
  std::vector<double> demand;
  std::vector<std::string> devices;
};

// nullopt when a demanded model has no replica.
std::optional<Problem> build_problem(const Placement& placement,
                                     const std::map<std::string, double>& demands,
                                     const ProfileSet& profiles) {
  Problem p;
  for (const auto& [model, qps] : demands) {
    if (!profiles.contains(model)) throw Error("demand for unknown model " + model);
    if (!(qps >= 0.0)) throw Error("negative demand for model " + model);
    const auto reps = placement.replicas_of_model(model);
    if (reps.empty()) return std::nullopt;
    p.models.push_back(model);
    p.demand.push_back(qps);
    for (const Replica* r : reps) {
      p.vars.push_back(r);
      p.runtime_s.push_back(profiles.at(model).per_sample_seconds());
      if (std::find(p.devices.begin(), p.devices.end(), r->device_id) == p.devices.end()) {
        p.devices.push_back(r->device_id);
      }
    }
  }
  std::sort(p.devices.begin(), p.devices.end());
  return p;
}

void add_coverage_rows(const Problem& p, std::size_t width, LinearProgram& lp) {
  for (std::size_t k = 0; k < p.models.size(); ++k) {
    std::vector<double> row(width, 0.0);
    for (std::size_t v = 0; v < p.vars.size(); ++v) {
      if (p.vars[v]->model_id == p.models[k]) row[v] = 1.0;
    }
    lp.add_row(std::move(row), RowSense::kGreaterEqual, p.demand[k]);
  }
}

std::vector<double> device_row(const Problem& p, const std::string& device,
                               std::size_t width) {
  std::vector<double> row(width, 0.0);
  for (std::size_t v = 0; v < p.vars.size(); ++v) {
    if (p.vars[v]->device_id == device) row[v] = p.runtime_s[v];
  }
  return row;
}

}  // namespace

std::map<std::string, double> device_busy(const Placement& placement,
                                          const LoadAssignment& assignment,
                                          const ProfileSet& profiles) {
  std::map<std::string, double> busy;
  for (const auto& d : placement.devices) busy[d.device_id] = 0.0;
  for (const auto& [rid, q] : assignment.q) {
    const Replica* r = placement.find_replica(rid);
    if (!r) throw Error("assignment names unknown replica " + rid);
    busy[r->device_id] += q * profiles.at(r->model_id).per_sample_seconds();
  }
  return busy;
}

std::optional<LoadAssignment> solve_lp(const Placement& placement,
                                       const std::map<std::string, double>& demands,
                                       const ProfileSet& profiles, double u) {
  if (!(u > 0.0 && u <= 1.0)) throw Error("utilization bound must lie in (0, 1]");
  const auto problem = build_problem(placement, demands, profiles);
  if (!problem) return std::nullopt;
  const Problem& p = *problem;
  const std::size_t n = p.vars.size();

  LoadAssignment out;
  out.achieved_u = u;
  if (n == 0) return out;

  // Primary objective: minimize sum of q_r.
  LinearProgram primary;
  primary.objective.assign(n, 1.0);
  add_coverage_rows(p, n, primary);
  for (const auto& d : p.devices) {
    primary.add_row(device_row(p, d, n), RowSense::kLessEqual, u);
  }
  const LpSolution first = solve_simplex(primary);
  if (first.status != LpStatus::kOptimal) return std::nullopt;

  // Secondary objective at the same total: minimize the largest busy
  // fraction z. Variables are q_0..q_{n-1}, z.
  LinearProgram secondary;
  secondary.objective.assign(n + 1, 0.0);
  secondary.objective[n] = 1.0;
  add_coverage_rows(p, n + 1, secondary);
  std::vector<double> total(n + 1, 1.0);
  total[n] = 0.0;
  secondary.add_row(std::move(total), RowSense::kLessEqual,
                    first.objective * (1.0 + 1e-12) + 1e-12);
  for (const auto& d : p.devices) {
    auto row = device_row(p, d, n + 1);
    row[n] = -1.0;
    secondary.add_row(std::move(row), RowSense::kLessEqual, 0.0);
  }
  std::vector<double> cap(n + 1, 0.0);
  cap[n] = 1.0;
  secondary.add_row(std::move(cap), RowSense::kLessEqual, u);
  const LpSolution second = solve_simplex(secondary);
  const std::vector<double>& x =
      second.status == LpStatus::kOptimal ? second.x : first.x;

  for (std::size_t v = 0; v < n; ++v) out.q[p.vars[v]->replica_id] = x[v];
  for (const auto& d : p.devices) {
    double busy = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      if (p.vars[v]->device_id == d) busy += x[v] * p.runtime_s[v];
    }
    out.max_busy = std::max(out.max_busy, busy);
  }
  return out;
}

std::optional<MinUtilization> min_utilization(
    const Placement& placement, const std::map<std::string, double>& demands,
    const ProfileSet& profiles) {
  const auto problem = build_problem(placement, demands, profiles);
  if (!problem) return std::nullopt;
  const bool empty_load = std::all_of(problem->demand.begin(), problem->demand.end(),
                                      [](double d) { return d == 0.0; });
  if (empty_load) {
    MinUtilization out;
    for (const Replica* r : problem->vars) out.assignment.q[r->replica_id] = 0.0;
    return out;
  }

  auto at_full = solve_lp(placement, demands, profiles, 1.0);
  if (!at_full) return std::nullopt;

  double lo = 0.0, hi = 1.0;
  LoadAssignment best = *at_full;
  while (hi - lo > kUtilizationTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (auto a = solve_lp(placement, demands, profiles, mid)) {
      hi = mid;
      best = std::move(*a);
    } else {
      lo = mid;
    }
  }
  return MinUtilization{hi, std::move(best)};
}

double max_throughput(const Placement& placement,
                      const std::map<std::string, double>& fractions,
                      const ProfileSet& profiles) {
  std::map<std::string, double> positive;
  for (const auto& [m, f] : fractions) {
    if (f > 0.0) positive[m] = f;
  }
  if (positive.empty()) return 0.0;
  const auto problem = build_problem(placement, positive, profiles);
  if (!problem) return 0.0;
  const Problem& p = *problem;
  const std::size_t n = p.vars.size();

  // Variables q_0..q_{n-1}, lambda; coverage reads sum q - f * lambda >= 0.
  LinearProgram lp;
  lp.objective.assign(n + 1, 0.0);
  lp.objective[n] = -1.0;
  for (std::size_t k = 0; k < p.models.size(); ++k) {
    std::vector<double> row(n + 1, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
      if (p.vars[v]->model_id == p.models[k]) row[v] = 1.0;
    }
    row[n] = -p.demand[k];
    lp.add_row(std::move(row), RowSense::kGreaterEqual, 0.0);
  }
  for (const auto& d : p.devices) {
    lp.add_row(device_row(p, d, n + 1), RowSense::kLessEqual, 1.0);
  }
  const LpSolution sol = solve_simplex(lp);
  if (sol.status != LpStatus::kOptimal) return 0.0;
  return sol.x[n];
}

}  // namespace cascadeserve
