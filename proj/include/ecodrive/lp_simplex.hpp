#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace ecodrive::lp {

/// Column-compressed constraint matrix.
struct SparseMatrix {
  int n_rows = 0;
  int n_cols = 0;
  std::vector<int> col_start;  // size n_cols + 1
  std::vector<int> row_index;
  std::vector<double> value;

  void add_column(const std::vector<std::pair<int, double>>& entries);
};

/// minimize obj . x  subject to  row_lb <= A x <= row_ub, col_lb <= x <= col_ub.
struct LpProblem {
  SparseMatrix a;
  std::vector<double> obj;
  std::vector<double> col_lb, col_ub;
  std::vector<double> row_lb, row_ub;
  double obj_offset = 0.0;
};

enum class LpStatus : std::uint8_t {
  kOptimal,
  kInfeasible,
  kUnbounded,
  kIterationLimit,
  kNumericalFailure,
};

enum class VarStatus : std::uint8_t { kBasic, kAtLower, kAtUpper, kFreeZero };

struct Basis {
  std::vector<int> basic;           // size m, column index per basis slot
  std::vector<VarStatus> status;    // size n + m (structural then slack)
};

struct LpResult {
  LpStatus status = LpStatus::kNumericalFailure;
  double objective = 0.0;
  std::vector<double> x;             // structural values
  std::vector<double> row_activity;  // Ax
  std::vector<double> dual;          // y, one per row
  std::vector<double> reduced_cost;  // structural reduced costs
  long iterations = 0;
};

struct SimplexOptions {
  double feas_tol = 1e-9;
  double dual_tol = 1e-7;
  double pivot_tol = 1e-10;
  long iteration_limit = 200000;
  int refactor_interval = 64;
  int stall_limit = 400;  // consecutive degenerate pivots before Bland mode
};

/// Bounded-variable revised primal simplex over a sparse LU of the basis with
/// product-form updates. Deterministic: all ties break on the lowest index.
class SimplexSolver {
 public:
  SimplexSolver(const LpProblem& problem, SimplexOptions options = {});
  ~SimplexSolver();

  /// Solve from the all-slack basis.
  LpResult solve();
  /// Solve starting from a previously obtained basis (bounds may have
  /// changed since); invalid warm data falls back to the slack basis.
  LpResult solve_from(const Basis& warm);

  const Basis& basis() const { return basis_; }
  void set_col_bounds(int col, double lb, double ub);
  long iterations() const { return total_iterations_; }
  /// Iteration cap for the next solve call only (0 = options limit).
  void set_iteration_budget(long budget) { iteration_budget_ = budget; }

 private:
  struct Lu;

  void reset_to_slack_basis();
  void load_basis(const Basis& warm);
  bool factorize();          // false on irreparable failure
  void compute_basic_values();
  void ftran(std::vector<double>& v) const;
  void btran(std::vector<double>& v) const;
  void column_of(int col, std::vector<std::pair<int, double>>& out) const;
  double bound_violation(int slot) const;
  double reduced_cost_of(int col, const std::vector<double>& y, bool phase1) const;
  LpResult run();
  /// Dual simplex loop used to reoptimize after bound changes when the
  /// starting basis is dual feasible. Returns true when it reached primal
  /// feasibility (the caller's primal loop then confirms optimality).
  bool run_dual(std::vector<double>& dvec, long* iters);
  LpResult extract(LpStatus status);

  const LpProblem& p_;
  SimplexOptions opt_;
  int m_ = 0, n_ = 0;

  SparseMatrix a_;                       // scaled copy of the constraint matrix
  std::vector<double> row_scale_, col_scale_;
  std::vector<double> lb_, ub_;  // length n + m (structural + slack), scaled
  std::vector<double> cost_;    // structural costs, slacks zero, scaled

  Basis basis_;
  std::vector<int> slot_of_;     // column -> basis slot or -1
  std::vector<double> x_;        // length n + m, current values
  std::vector<double> y_;        // duals, length m

  struct Eta {
    int slot;
    std::vector<std::pair<int, double>> col;  // basis-slot index, value
    double pivot;
  };
  std::unique_ptr<Lu> lu_;
  std::vector<Eta> etas_;
  long total_iterations_ = 0;
  long iteration_budget_ = 0;
};

}  // namespace ecodrive::lp
