#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ecodrive/lp_simplex.hpp"
#include "ecodrive/problem_spec.hpp"

namespace ecodrive::solver {

struct SolverLimits {
  double time_budget_s = 0.9;     // wall-clock backstop; <= 0 disables
  long node_limit = 5000;
  double gap_tol = 1e-3;          // relative
  double int_tol = 1e-6;
  long work_limit = 0;            // total LP iterations across nodes; 0 disables
};

enum class MipStatus {
  kOptimal,
  kGapLimit,
  kNodeLimit,
  kTimeLimit,
  kWorkLimit,
  kInfeasible,
  kNoIncumbent,  // limits hit before any integer-feasible point was found
};

struct MipResult {
  MipStatus status = MipStatus::kNoIncumbent;
  bool has_incumbent = false;
  std::vector<double> values;  // structural variable values of the incumbent
  double objective = 0.0;
  double best_bound = 0.0;
  double rel_gap = 0.0;
  long nodes = 0;
  long lp_iterations = 0;
  double solve_seconds = 0.0;

  std::string status_string() const;
};

/// Rounds a node relaxation into an integer-feasible candidate; returns
/// false when no candidate could be built.
using PrimalHeuristic =
    std::function<bool(const std::vector<double>& relaxation, std::vector<double>* candidate)>;

/// Deterministic best-first branch-and-bound with depth-first plunging.
/// Branches on the most fractional binary first, then on the most violated
/// SOS2 set (split at the weighted-midpoint breakpoint). A warm-start point
/// seeds the incumbent when it is feasible. `root_basis` warm-starts the
/// root relaxation (problems with the same layout, e.g. consecutive MPC
/// cycles, reoptimize in a few pivots); `out_root_basis` receives the root
/// optimal basis for the next cycle.
MipResult solve(const mip::ProblemSpec& spec, const SolverLimits& limits,
                const std::vector<double>* warm_start = nullptr,
                const PrimalHeuristic& heuristic = nullptr,
                const lp::Basis* root_basis = nullptr, lp::Basis* out_root_basis = nullptr);

}  // namespace ecodrive::solver
