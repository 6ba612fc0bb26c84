#pragma once

#include <vector>

namespace cascadeserve {

enum class RowSense { kLessEqual, kGreaterEqual, kEqual };

struct LpRow {
  std::vector<double> coeffs;  // dense, one entry per variable
  RowSense sense = RowSense::kLessEqual;
  double rhs = 0.0;
};

/// minimize objective . x  subject to rows, x >= 0.
struct LinearProgram {
  std::vector<double> objective;
  std::vector<LpRow> rows;

  std::size_t num_vars() const { return objective.size(); }
  void add_row(std::vector<double> coeffs, RowSense sense, double rhs) {
    rows.push_back({std::move(coeffs), sense, rhs});
  }
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  std::vector<double> x;
  double objective = 0.0;
};

/// Two-phase tableau simplex with Bland's rule. Sized for the small
/// load-balancing programs; dense throughout.
LpSolution solve_simplex(const LinearProgram& lp);

}  // namespace cascadeserve
