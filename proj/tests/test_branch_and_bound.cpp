#include "ecodrive/branch_and_bound.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "ecodrive/problem_spec.hpp"

using namespace ecodrive;
using mip::kInf;

namespace {

solver::SolverLimits loose_limits() {
  solver::SolverLimits lim;
  lim.time_budget_s = 0.0;  // deterministic: no wall-clock cutoff
  lim.node_limit = 100000;
  lim.gap_tol = 1e-9;
  return lim;
}

}  // namespace

TEST_CASE("pure LP spec solved at root") {
  mip::ProblemSpec spec;
  int x = spec.add_var("x", 0.0, 10.0, 1.0);
  spec.add_row("lo", 3.0, kInf, {{x, 1.0}});
  auto res = solver::solve(spec, loose_limits());
  REQUIRE(res.has_incumbent);
  CHECK(res.status == solver::MipStatus::kOptimal);
  CHECK(res.objective == doctest::Approx(3.0));
  CHECK(res.nodes == 1);
}

TEST_CASE("small knapsack equals enumeration") {
  // max 5a + 4b + 3c s.t. 2a + 3b + c <= 3 -> min negated
  mip::ProblemSpec spec;
  int a = spec.add_binary("a", -5.0);
  int b = spec.add_binary("b", -4.0);
  int c = spec.add_binary("c", -3.0);
  spec.add_row("cap", -kInf, 3.0, {{a, 2.0}, {b, 3.0}, {c, 1.0}});
  auto res = solver::solve(spec, loose_limits());
  REQUIRE(res.has_incumbent);
  CHECK(res.objective == doctest::Approx(-8.0));  // a=1, c=1
  CHECK(std::round(res.values[a]) == 1);
  CHECK(std::round(res.values[b]) == 0);
  CHECK(std::round(res.values[c]) == 1);
  CHECK(res.rel_gap <= 1e-9);
}

TEST_CASE("SOS2 adjacency enforced by set-split branching") {
  // Weights over breakpoints x_i = {0,1,2,3,4}, f_i = {0,-1,0,-1,0}:
  // the LP relaxation wants lambda_1 = lambda_3 = 0.5 (non-adjacent) with
  // value -1 at x = 2; SOS2 forces an adjacent pair, still value -1 but with
  // x at 1 or 3. Add a small pull toward x=2 so the relaxation is strictly
  // better than any adjacent-feasible point.
  mip::ProblemSpec spec;
  std::vector<int> lam;
  const double f[5] = {0.0, -1.0, 0.0, -1.0, 0.0};
  for (int i = 0; i < 5; ++i) {
    lam.push_back(spec.add_var("l" + std::to_string(i), 0.0, 1.0, f[i]));
  }
  int x = spec.add_var("x", 0.0, 4.0, 0.0);
  spec.add_row("conv", 1.0, 1.0, {{lam[0], 1}, {lam[1], 1}, {lam[2], 1}, {lam[3], 1}, {lam[4], 1}});
  spec.add_row("link", 0.0, 0.0,
               {{lam[1], 1.0}, {lam[2], 2.0}, {lam[3], 3.0}, {lam[4], 4.0}, {x, -1.0}});
  spec.add_row("pin", 2.0, 2.0, {{x, 1.0}});  // forces x = 2
  spec.add_sos2("s", lam);

  auto res = solver::solve(spec, loose_limits());
  REQUIRE(res.has_incumbent);
  // With x pinned to 2 and adjacency enforced, the best is lambda_2=1 or an
  // adjacent straddle of breakpoint 2: value -0.5 at {1,2} or {2,3} split
  // evenly? lambda_1 + lambda_2 = 1 with lambda_1*1 + lambda_2*2 = 2 forces
  // lambda_2 = 1, value 0... adjacent pair {1,3} is not allowed. Best value
  // comes from pair (2,3): 3*l3 + 2*l2 = 2, l2+l3=1 -> l3=0, value 0. Pair
  // (1,2): l1+2*l2=2, l1+l2=1 -> l1=0, l2=1, value 0. So optimum is 0.
  CHECK(res.objective == doctest::Approx(0.0));
  CHECK(spec.integer_feasible(res.values, 1e-6));
}

TEST_CASE("warm start seeds incumbent") {
  mip::ProblemSpec spec;
  int a = spec.add_binary("a", -5.0);
  int b = spec.add_binary("b", -4.0);
  spec.add_row("cap", -kInf, 1.0, {{a, 1.0}, {b, 1.0}});
  std::vector<double> warm = {1.0, 0.0};
  auto res = solver::solve(spec, loose_limits(), &warm);
  REQUIRE(res.has_incumbent);
  CHECK(res.objective == doctest::Approx(-5.0));
}

TEST_CASE("infeasible spec reports infeasible") {
  mip::ProblemSpec spec;
  int a = spec.add_binary("a", 1.0);
  spec.add_row("impossible", 2.5, kInf, {{a, 1.0}});
  auto res = solver::solve(spec, loose_limits());
  CHECK(res.status == solver::MipStatus::kInfeasible);
  CHECK(!res.has_incumbent);
}

TEST_CASE("randomized binary MIPs match brute force") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int nb = 8;
    mip::ProblemSpec spec;
    std::vector<int> vars;
    std::vector<double> objs(nb), w(nb);
    for (int j = 0; j < nb; ++j) {
      objs[j] = coef(rng);
      vars.push_back(spec.add_binary("b" + std::to_string(j), objs[j]));
      w[j] = std::abs(coef(rng));
    }
    double cap = 0.0;
    for (double v : w) cap += v;
    cap *= 0.4;
    std::vector<mip::RowEntry> row;
    for (int j = 0; j < nb; ++j) row.push_back({vars[j], w[j]});
    spec.add_row("cap", -kInf, cap, row);

    auto res = solver::solve(spec, loose_limits());
    REQUIRE(res.has_incumbent);

    double best = 0.0;  // all-zero always feasible
    for (int mask = 0; mask < (1 << nb); ++mask) {
      double tot = 0.0, val = 0.0;
      for (int j = 0; j < nb; ++j) {
        if (mask & (1 << j)) {
          tot += w[j];
          val += objs[j];
        }
      }
      if (tot <= cap + 1e-12) best = std::min(best, val);
    }
    CHECK(res.objective == doctest::Approx(best).epsilon(1e-9));
  }
}
