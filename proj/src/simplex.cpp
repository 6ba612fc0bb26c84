#include "cascadeserve/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cascadeserve {

namespace {

constexpr double kPivotEps = 1e-11;
constexpr double kCostEps = 1e-10;

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_((rows + 1) * (cols + 1), 0.0), basis_(rows, 0) {}

  double& at(std::size_t r, std::size_t c) { return data_[r * (cols_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * (cols_ + 1) + c]; }
  double& rhs(std::size_t r) { return at(r, cols_); }
  double& cost(std::size_t c) { return at(rows_, c); }
  double& value() { return at(rows_, cols_); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::vector<std::size_t>& basis() { return basis_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double inv = 1.0 / at(pr, pc);
    for (std::size_t c = 0; c <= cols_; ++c) at(pr, c) *= inv;
    at(pr, pc) = 1.0;
    for (std::size_t r = 0; r <= rows_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c <= cols_; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
    basis_[pr] = pc;
  }

  /// Runs primal simplex on the current cost row. Columns at or beyond
  /// `barred_from` never enter. Returns false when unbounded.
  bool optimize(std::size_t barred_from) {
    for (std::size_t iter = 0; iter < 100000; ++iter) {
      std::size_t enter = cols_;
      for (std::size_t c = 0; c < barred_from; ++c) {
        if (cost(c) < -kCostEps) {
          enter = c;
          break;
        }
      }
      if (enter == cols_) return true;
      std::size_t leave = rows_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows_; ++r) {
        const double a = at(r, enter);
        if (a <= kPivotEps) continue;
        const double ratio = rhs(r) / a;
        if (ratio < best - 1e-12 ||
            (std::abs(ratio - best) <= 1e-12 && leave < rows_ && basis_[r] < basis_[leave])) {
          best = ratio;
          leave = r;
        }
      }
      if (leave == rows_) return false;
      pivot(leave, enter);
    }
    throw std::runtime_error("simplex iteration limit exceeded");
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
  std::vector<std::size_t> basis_;
};

}  // namespace

LpSolution solve_simplex(const LinearProgram& lp) {
  const std::size_t n = lp.num_vars();
  const std::size_t m = lp.rows.size();
  for (const auto& row : lp.rows) {
    if (row.coeffs.size() != n) throw std::invalid_argument("LP row width mismatch");
  }

  // Normalize to non-negative right-hand sides.
  std::vector<LpRow> rows = lp.rows;
  for (auto& row : rows) {
    if (row.rhs < 0.0) {
      for (double& a : row.coeffs) a = -a;
      row.rhs = -row.rhs;
      if (row.sense == RowSense::kLessEqual) {
        row.sense = RowSense::kGreaterEqual;
      } else if (row.sense == RowSense::kGreaterEqual) {
        row.sense = RowSense::kLessEqual;
      }
    }
  }
  std::size_t n_slack = 0, n_art = 0;
  for (const auto& row : rows) {
    if (row.sense != RowSense::kEqual) ++n_slack;
    if (row.sense != RowSense::kLessEqual) ++n_art;
  }
  const std::size_t art_begin = n + n_slack;
  Tableau t(m, art_begin + n_art);

  double scale = 1.0;
  std::size_t slack = n, art = art_begin;
  for (std::size_t r = 0; r < m; ++r) {
    const auto& row = rows[r];
    for (std::size_t c = 0; c < n; ++c) t.at(r, c) = row.coeffs[c];
    t.rhs(r) = row.rhs;
    scale = std::max(scale, row.rhs);
    if (row.sense == RowSense::kLessEqual) {
      t.at(r, slack) = 1.0;
      t.basis()[r] = slack++;
    } else {
      if (row.sense == RowSense::kGreaterEqual) t.at(r, slack++) = -1.0;
      t.at(r, art) = 1.0;
      t.basis()[r] = art++;
    }
  }

  LpSolution sol;
  if (n_art > 0) {
    // Phase 1: minimize the sum of artificials.
    for (std::size_t r = 0; r < m; ++r) {
      if (t.basis()[r] < art_begin) continue;
      for (std::size_t c = 0; c <= t.cols(); ++c) {
        if (c < art_begin || c == t.cols()) t.at(m, c) -= t.at(r, c);
      }
    }
    t.optimize(t.cols());
    if (-t.value() > 1e-9 * scale) {
      sol.status = LpStatus::kInfeasible;
      return sol;
    }
    // Drive remaining zero-valued artificials out of the basis.
    for (std::size_t r = 0; r < m; ++r) {
      if (t.basis()[r] < art_begin) continue;
      for (std::size_t c = 0; c < art_begin; ++c) {
        if (std::abs(t.at(r, c)) > 1e-9) {
          t.pivot(r, c);
          break;
        }
      }
    }
  }

  // Phase 2 cost row: c_j - c_B B^-1 A_j.
  for (std::size_t c = 0; c <= t.cols(); ++c) t.at(m, c) = 0.0;
  for (std::size_t c = 0; c < n; ++c) t.cost(c) = lp.objective[c];
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t b = t.basis()[r];
    const double cb = b < n ? lp.objective[b] : 0.0;
    if (cb == 0.0) continue;
    for (std::size_t c = 0; c <= t.cols(); ++c) t.at(m, c) -= cb * t.at(r, c);
  }
  if (!t.optimize(art_begin)) {
    sol.status = LpStatus::kUnbounded;
    return sol;
  }

  sol.status = LpStatus::kOptimal;
  sol.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (t.basis()[r] < n) sol.x[t.basis()[r]] = std::max(0.0, t.rhs(r));
  }
  for (std::size_t c = 0; c < n; ++c) sol.objective += lp.objective[c] * sol.x[c];
  return sol;
}

}  // namespace cascadeserve
