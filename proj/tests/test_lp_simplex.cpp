#include "ecodrive/lp_simplex.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace ecodrive::lp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LpProblem make_problem(int n_rows, const std::vector<double>& obj,
                       const std::vector<std::pair<double, double>>& col_bounds,
                       const std::vector<std::vector<std::pair<int, double>>>& cols,
                       const std::vector<std::pair<double, double>>& row_bounds) {
  LpProblem p;
  p.a.n_rows = n_rows;
  for (const auto& c : cols) p.a.add_column(c);
  p.obj = obj;
  for (auto [lo, hi] : col_bounds) {
    p.col_lb.push_back(lo);
    p.col_ub.push_back(hi);
  }
  for (auto [lo, hi] : row_bounds) {
    p.row_lb.push_back(lo);
    p.row_ub.push_back(hi);
  }
  return p;
}

void check_kkt(const LpProblem& p, const LpResult& r) {
  // Primal feasibility.
  for (size_t j = 0; j < p.obj.size(); ++j) {
    CHECK(r.x[j] >= p.col_lb[j] - 1e-7);
    CHECK(r.x[j] <= p.col_ub[j] + 1e-7);
  }
  for (int i = 0; i < p.a.n_rows; ++i) {
    CHECK(r.row_activity[i] >= p.row_lb[i] - 1e-7);
    CHECK(r.row_activity[i] <= p.row_ub[i] + 1e-7);
  }
  // Complementary slackness / dual sign conditions.
  for (size_t j = 0; j < p.obj.size(); ++j) {
    const bool at_lb = r.x[j] <= p.col_lb[j] + 1e-7;
    const bool at_ub = r.x[j] >= p.col_ub[j] - 1e-7;
    if (!at_lb && !at_ub) CHECK(std::abs(r.reduced_cost[j]) < 1e-6);
    if (at_lb && !at_ub) CHECK(r.reduced_cost[j] > -1e-6);
    if (at_ub && !at_lb) CHECK(r.reduced_cost[j] < 1e-6);
  }
}

}  // namespace

TEST_CASE("single variable minimum at bound") {
  // min x s.t. x >= 3
  auto p = make_problem(0, {1.0}, {{3.0, kInf}}, {{}}, {});
  SimplexSolver s(p);
  auto r = s.solve();
  REQUIRE(r.status == LpStatus::kOptimal);
  CHECK(r.x[0] == doctest::Approx(3.0));
  CHECK(r.objective == doctest::Approx(3.0));
}

TEST_CASE("two variable LP hits known vertex") {
  // min -x - 2y s.t. x + y <= 4, x + 3y <= 6, 0 <= x,y <= 10
  // Vertex solve: optimum at intersection (3, 1), objective -5.
  auto p = make_problem(2, {-1.0, -2.0}, {{0.0, 10.0}, {0.0, 10.0}},
                        {{{0, 1.0}, {1, 1.0}}, {{0, 1.0}, {1, 3.0}}},
                        {{-kInf, 4.0}, {-kInf, 6.0}});
  SimplexSolver s(p);
  auto r = s.solve();
  REQUIRE(r.status == LpStatus::kOptimal);
  CHECK(r.x[0] == doctest::Approx(3.0));
  CHECK(r.x[1] == doctest::Approx(1.0));
  CHECK(r.objective == doctest::Approx(-5.0));
  check_kkt(p, r);
}

TEST_CASE("infeasible bounds pair") {
  // x >= 1 and x <= 0 via two rows.
  auto p = make_problem(2, {0.0}, {{-kInf, kInf}}, {{{0, 1.0}, {1, 1.0}}},
                        {{1.0, kInf}, {-kInf, 0.0}});
  SimplexSolver s(p);
  auto r = s.solve();
  CHECK(r.status == LpStatus::kInfeasible);
}

TEST_CASE("unbounded below") {
  auto p = make_problem(1, {-1.0}, {{0.0, kInf}}, {{{0, 0.5}}}, {{0.0, kInf}});
  SimplexSolver s(p);
  auto r = s.solve();
  CHECK(r.status == LpStatus::kUnbounded);
}

TEST_CASE("equality rows and range rows") {
  // min x + y s.t. x + y = 2, x - y in [-1, 1]
  auto p = make_problem(2, {1.0, 1.0}, {{-10.0, 10.0}, {-10.0, 10.0}},
                        {{{0, 1.0}, {1, 1.0}}, {{0, 1.0}, {1, -1.0}}},
                        {{2.0, 2.0}, {-1.0, 1.0}});
  SimplexSolver s(p);
  auto r = s.solve();
  REQUIRE(r.status == LpStatus::kOptimal);
  CHECK(r.objective == doctest::Approx(2.0));
  check_kkt(p, r);
}

TEST_CASE("randomized LPs satisfy KKT and match dense reference") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_real_distribution<double> bnd(0.5, 3.0);

  for (int trial = 0; trial < 40; ++trial) {
    const int n = 6, m = 4;
    std::vector<std::vector<std::pair<int, double>>> cols(n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) {
        const double v = coef(rng);
        if (std::abs(v) > 0.7) cols[j].push_back({i, v});
      }
    }
    std::vector<double> obj(n);
    std::vector<std::pair<double, double>> cb(n), rb(m);
    for (int j = 0; j < n; ++j) {
      obj[j] = coef(rng);
      cb[j] = {-bnd(rng), bnd(rng)};
    }
    for (int i = 0; i < m; ++i) rb[i] = {-bnd(rng) - 2.0, bnd(rng) + 2.0};
    auto p = make_problem(m, obj, cb, cols, rb);
    SimplexSolver s(p);
    auto r = s.solve();
    REQUIRE(r.status == LpStatus::kOptimal);  // box interior is always feasible here? bounds straddle 0 and rows contain 0
    check_kkt(p, r);

    // Reference: optimum must beat a sample of random feasible points.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int probe = 0; probe < 200; ++probe) {
      std::vector<double> x(n);
      for (int j = 0; j < n; ++j) x[j] = cb[j].first + unit(rng) * (cb[j].second - cb[j].first);
      bool feasible = true;
      for (int i = 0; i < m; ++i) {
        double act = 0.0;
        for (int j = 0; j < n; ++j) {
          for (auto [ri, v] : cols[j]) {
            if (ri == i) act += v * x[j];
          }
        }
        if (act < rb[i].first - 1e-9 || act > rb[i].second + 1e-9) {
          feasible = false;
          break;
        }
      }
      if (!feasible) continue;
      double val = 0.0;
      for (int j = 0; j < n; ++j) val += obj[j] * x[j];
      CHECK(r.objective <= val + 1e-6);
    }
  }
}

TEST_CASE("warm start resolves after bound change") {
  // min -x - y, x + y <= 3, x,y in [0,2]
  auto p = make_problem(1, {-1.0, -1.0}, {{0.0, 2.0}, {0.0, 2.0}},
                        {{{0, 1.0}}, {{0, 1.0}}}, {{-kInf, 3.0}});
  SimplexSolver s(p);
  auto r = s.solve();
  REQUIRE(r.status == LpStatus::kOptimal);
  CHECK(r.objective == doctest::Approx(-3.0));

  Basis warm = s.basis();
  s.set_col_bounds(0, 0.0, 0.5);  // branch-like tightening
  auto r2 = s.solve_from(warm);
  REQUIRE(r2.status == LpStatus::kOptimal);
  CHECK(r2.objective == doctest::Approx(-2.5));
  CHECK(r2.x[0] == doctest::Approx(0.5));
  CHECK(r2.x[1] == doctest::Approx(2.0));
}

TEST_CASE("determinism: identical problems give identical pivots") {
  auto build = [] {
    return make_problem(2, {-1.0, -2.0}, {{0.0, 10.0}, {0.0, 10.0}},
                        {{{0, 1.0}, {1, 1.0}}, {{0, 1.0}, {1, 3.0}}},
                        {{-kInf, 4.0}, {-kInf, 6.0}});
  };
  auto p1 = build(), p2 = build();
  SimplexSolver s1(p1), s2(p2);
  auto r1 = s1.solve(), r2 = s2.solve();
  CHECK(r1.iterations == r2.iterations);
  CHECK(r1.objective == r2.objective);
  CHECK(r1.x == r2.x);
}
