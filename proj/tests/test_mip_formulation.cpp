#include "ecodrive/mip_formulation.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "ecodrive/branch_and_bound.hpp"
#include "ecodrive/config.hpp"

using namespace ecodrive;
using namespace ecodrive::mip;

namespace {

const config::Bundle& bundle() {
  static config::Bundle b = config::default_bundle();
  return b;
}

estimation::LeadPrediction cruise_lead(double start_m, double speed, double horizon_s,
                                       double sigma_rate = 0.0) {
  estimation::LeadPrediction lead;
  lead.dt = 0.1;
  const int steps = static_cast<int>(horizon_s / lead.dt + 0.5);
  for (int i = 0; i <= steps; ++i) {
    lead.position_m.push_back(start_m + speed * i * lead.dt);
    lead.speed_mps.push_back(speed);
    lead.sigma_position_m.push_back(sigma_rate * i * lead.dt);
  }
  return lead;
}

CycleInput nominal_input(double v0 = 12.0, double lead_gap = 30.0, double lead_speed = 13.0,
                         int n = 50) {
  const auto& plant = bundle().three_speed;
  CycleInput in;
  in.state.position_m = 0.0;
  in.state.speed_mps = v0;
  in.state.soc = 0.7;
  in.n_steps = n;
  in.dt = 0.2;
  in.lead = cruise_lead(lead_gap, lead_speed, n * in.dt + 0.5);
  in.pb_min = powertrain::battery_power(plant.battery.i_charge.at(0.7), 0.7, plant.battery);
  in.pb_max = powertrain::battery_power(plant.battery.i_discharge.at(0.7), 0.7, plant.battery);
  return in;
}

// Evaluate the linear form of a row at a point given as (var, value) pairs.
double eval_entries(const std::vector<RowEntry>& entries,
                    const std::vector<std::pair<int, double>>& at) {
  double acc = 0.0;
  for (const auto& e : entries) {
    for (const auto& [v, val] : at) {
      if (v == e.var) acc += e.coef * val;
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("gear big-M pins the bilinear pair when a gear is engaged") {
  ProblemSpec spec;
  const int v = spec.add_var("v", 0.0, 32.0);
  const int wm = spec.add_var("wm", 0.0, 1100.0);
  const int tm = spec.add_var("tm", -250.0, 250.0);
  const int fr = spec.add_var("fr", -9000.0, 20000.0);
  std::vector<int> g = {spec.add_binary("g1"), spec.add_binary("g2"), spec.add_binary("g3")};
  const std::vector<double> ratios = {17.1, 23.6, 32.3};
  GearBigMBounds b;
  encode_gear_bigM(spec, "t", v, 0.0, wm, tm, fr, g, ratios, b);
  REQUIRE(spec.n_rows() == 12);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uv(0.0, 32.0), ut(-250.0, 250.0);
  for (int gi = 0; gi < 3; ++gi) {
    for (int trial = 0; trial < 1000; ++trial) {
      const double vv = uv(rng);
      const double tt = ut(rng);
      // With g_i = 1, the four rows must force wm = r v and fr = tm r.
      double wm_lo = -1e18, wm_hi = 1e18, fr_lo = -1e18, fr_hi = 1e18;
      for (int i = 0; i < 12; ++i) {
        const auto& row = spec.rows[i];
        std::vector<std::pair<int, double>> pt = {{v, vv}, {tm, tt}};
        for (int k = 0; k < 3; ++k) pt.push_back({g[k], k == gi ? 1.0 : 0.0});
        double coef_wm = 0.0, coef_fr = 0.0;
        for (const auto& e : row.entries) {
          if (e.var == wm) coef_wm = e.coef;
          if (e.var == fr) coef_fr = e.coef;
        }
        const double rest = eval_entries(row.entries, pt);
        if (coef_wm != 0.0) {
          if (row.lb > -1e17) wm_lo = std::max(wm_lo, (row.lb - rest) / coef_wm);
          if (row.ub < 1e17) wm_hi = std::min(wm_hi, (row.ub - rest) / coef_wm);
        } else if (coef_fr != 0.0) {
          // fr appears with coefficient -1.
          if (row.lb > -1e17) fr_hi = std::min(fr_hi, -(row.lb - rest));
          if (row.ub < 1e17) fr_lo = std::max(fr_lo, -(row.ub - rest));
        }
      }
      CHECK(std::abs(wm_lo - ratios[gi] * vv) < 1e-9);
      CHECK(std::abs(wm_hi - ratios[gi] * vv) < 1e-9);
      CHECK(std::abs(fr_lo - ratios[gi] * tt) < 1e-9);
      CHECK(std::abs(fr_hi - ratios[gi] * tt) < 1e-9);
    }
  }
}

TEST_CASE("disengaged gears leave the box free") {
  ProblemSpec spec;
  const int v = spec.add_var("v", 0.0, 32.0);
  const int wm = spec.add_var("wm", 0.0, 1100.0);
  const int tm = spec.add_var("tm", -250.0, 250.0);
  const int fr = spec.add_var("fr", -9000.0, 20000.0);
  std::vector<int> g = {spec.add_binary("g1")};
  GearBigMBounds b;
  encode_gear_bigM(spec, "t", v, 0.0, wm, tm, fr, g, {23.6}, b);

  // With g = 0, every corner of the (v, wm, tm, fr) box must satisfy the rows.
  for (double vv : {0.0, 32.0}) {
    for (double ww : {0.0, 1100.0}) {
      for (double tt : {-250.0, 250.0}) {
        for (double ff : {-9000.0, 20000.0}) {
          std::vector<double> x(spec.n_vars(), 0.0);
          x[v] = vv;
          x[wm] = ww;
          x[tm] = tt;
          x[fr] = ff;
          x[g[0]] = 0.0;
          for (const auto& row : spec.rows) {
            const double act = spec.row_activity(row, x);
            CHECK(act >= row.lb - 1e-9);
            CHECK(act <= row.ub + 1e-9);
          }
        }
      }
    }
  }
}

TEST_CASE("speed SOS2 surrogate error stays below the chord bound") {
  const auto bps = speed_breakpoints(33, 32.0);
  REQUIRE(bps.size() == 33);
  CHECK(bps.front() == 0.0);
  CHECK(bps.back() == 32.0);
  // Adjacent-pair interpolation of b^2 against the true square.
  double worst = 0.0;
  for (double v = 0.0; v <= 32.0; v += 1e-3) {
    size_t i = 0;
    while (i + 2 < bps.size() && bps[i + 1] <= v) ++i;
    const double f = (v - bps[i]) / (bps[i + 1] - bps[i]);
    const double sur = (1 - f) * bps[i] * bps[i] + f * bps[i + 1] * bps[i + 1];
    const double err = sur - v * v;
    CHECK(err >= -1e-12);
    worst = std::max(worst, err);
    // Chord-error identity: surrogate - v^2 = (b_{i+1} - v)(v - b_i).
    CHECK(err == doctest::Approx((bps[i + 1] - v) * (v - bps[i])).epsilon(1e-9));
  }
  CHECK(worst <= 0.25 + 1e-12);
  CHECK(worst > 0.24);
}

TEST_CASE("McCormick envelope is tight at corners, ΔTΔw/4 at the center") {
  ProblemSpec spec;
  const int pm = spec.add_var("pm", -1e9, 1e9);
  const int wm = spec.add_var("wm", 100.0, 900.0);
  const int tm = spec.add_var("tm", -200.0, 150.0);
  encode_mccormick(spec, "t", pm, wm, tm, 100.0, 900.0, -200.0, 150.0);
  REQUIRE(spec.n_rows() == 4);

  auto envelope = [&](double w, double t) {
    double lo = -1e18, hi = 1e18;
    for (const auto& row : spec.rows) {
      double cpm = 0.0, rest = 0.0;
      for (const auto& e : row.entries) {
        if (e.var == pm) cpm = e.coef;
        else if (e.var == wm) rest += e.coef * w;
        else if (e.var == tm) rest += e.coef * t;
      }
      if (row.lb > -1e17) lo = std::max(lo, row.lb - rest);
      if (row.ub < 1e17) hi = std::min(hi, row.ub - rest);
    }
    return std::pair{lo, hi};
  };

  for (auto [w, t] : {std::pair{100.0, -200.0}, {100.0, 150.0}, {900.0, -200.0}, {900.0, 150.0}}) {
    auto [lo, hi] = envelope(w, t);
    CHECK(std::abs(lo - w * t) < 1e-9);
    CHECK(std::abs(hi - w * t) < 1e-9);
  }
  auto [lo, hi] = envelope(500.0, -25.0);
  const double gap_expected = (150.0 - -200.0) * (900.0 - 100.0) / 4.0;
  CHECK(hi - lo == doctest::Approx(gap_expected).epsilon(1e-9));
}

TEST_CASE("degenerate McCormick box pins the product") {
  ProblemSpec spec;
  const int pm = spec.add_var("pm", -1e9, 1e9);
  const int wm = spec.add_var("wm", 100.0, 900.0);
  const int tm = spec.add_var("tm", 80.0, 80.0);
  encode_mccormick(spec, "t", pm, wm, tm, 100.0, 900.0, 80.0, 80.0);
  for (double w : {100.0, 432.1, 900.0}) {
    std::vector<double> x(spec.n_vars(), 0.0);
    x[pm] = w * 80.0;
    x[wm] = w;
    x[tm] = 80.0;
    CHECK(spec.max_violation(x) < 1e-9);
    x[pm] = w * 80.0 + 1.0;
    CHECK(spec.max_violation(x) > 0.5);
  }
}

TEST_CASE("low-speed cutoff bound: active at rest, inactive at speed") {
  ProblemSpec spec;
  const int v = spec.add_var("v", 0.0, 32.0);
  const int tm = spec.add_var("tm", -250.0, 250.0);
  const auto bps = speed_breakpoints(33, 32.0);
  const double v_lscp = 10.0 / 3.6;
  auto tau = encode_lscp(spec, "t", v, tm, bps, v_lscp, -250.0);
  REQUIRE(tau.size() == 33);

  auto bound_at = [&](double speed) {
    // Adjacent interpolation of the step function, as the SOS2 set allows.
    size_t i = 0;
    while (i + 2 < bps.size() && bps[i + 1] <= speed) ++i;
    const double f = (speed - bps[i]) / (bps[i + 1] - bps[i]);
    const double g0 = bps[i] <= v_lscp ? 0.0 : -250.0;
    const double g1 = bps[i + 1] <= v_lscp ? 0.0 : -250.0;
    return (1 - f) * g0 + f * g1;
  };
  CHECK(bound_at(0.0) == 0.0);           // T_m >= 0 below the cutoff
  CHECK(bound_at(32.0) == -250.0);       // inactive at speed
  // Transition band between the cutoff-adjacent breakpoints (2 and 3 m/s).
  CHECK(bound_at(2.5) == 0.0);
  const double mid = bound_at(2.9);
  CHECK(mid < 0.0);
  CHECK(mid > -250.0);
}

TEST_CASE("regen big-M floors") {
  ProblemSpec spec;
  const int tm = spec.add_var("tm", -250.0, 250.0);
  std::vector<int> g = {spec.add_binary("g1"), spec.add_binary("g2")};
  const double m_a_reg = 1948.0 * (-0.2 * 9.81);
  encode_regen_bigM(spec, "t", tm, g, {17.1, 23.6}, 250.0, m_a_reg);
  REQUIRE(spec.n_rows() == 2);

  // Engaged second gear: T_m >= m a_reg / r = -161.95 N m.
  std::vector<double> x(spec.n_vars(), 0.0);
  x[g[1]] = 1.0;
  x[tm] = m_a_reg / 23.6 + 1e-9;
  CHECK(spec.max_violation(x) < 1e-6);
  CHECK(m_a_reg / 23.6 == doctest::Approx(-161.95).epsilon(1e-3));
  x[tm] = m_a_reg / 23.6 - 0.5;
  CHECK(spec.max_violation(x) > 1e-3);

  // Disengaged gears never bind at full regen torque.
  x = std::vector<double>(spec.n_vars(), 0.0);
  x[g[0]] = 1.0;
  x[tm] = -250.0;
  const auto& row2 = spec.rows[1];  // gear 2 row with g2 = 0
  CHECK(spec.row_activity(row2, x) >= row2.lb - 1e-9);
}

TEST_CASE("soft corridor recovers the hard constraints at zero sigma") {
  ProblemSpec spec;
  const int d = spec.add_var("d", -1e4, 1e4);
  const int v = spec.add_var("v", 0.0, 32.0);
  Weights w;
  auto sc = soften_car_following(spec, "t", d, v, 100.0, 0.0, w, bundle().three_speed.vehicle,
                                 bundle().mip);

  // Lead at 100 m, stationary: ego below 55 m keeps the safety side inactive
  // (d <= 100 - 5 - 1.5 v + s_min with v = 0 -> d <= 95).
  std::vector<double> x(spec.n_vars(), 0.0);
  x[d] = 80.0;
  x[sc.s_max] = 0.0;
  x[sc.s_min] = 0.0;
  // Weight variables of the two penalty PWLs must satisfy their convexity
  // rows; put all weight on the first breakpoint (slack 0).
  for (const auto& set : spec.sos2_sets) x[set.vars[0]] = 1.0;
  CHECK(spec.max_violation(x) < 1e-9);

  x[d] = 50.0;  // more than d_max = 40 behind the lead: needs s_max
  CHECK(spec.max_violation(x) > 1.0);
  x[sc.s_max] = 100.0 - 40.0 - 50.0 + 1e-6;
  // Move the PWL weight onto the matching breakpoint pair is not needed for
  // the corridor row itself; only the link row changes.
  CHECK(spec.row_activity(spec.rows[0], x) >= spec.rows[0].lb - 1e-9);
}

TEST_CASE("full problem census and determinism") {
  const auto in = nominal_input();
  auto built = build_problem(in, bundle().weights, bundle().three_speed, bundle().mip);
  const int n = in.n_steps;
  const int d_g = 3;
  const auto& mp = bundle().mip;

  // Variables: states + controls + binaries + SOS2 weights + penalty weights.
  const int n_core = 2 * (n + 1) + 7 * n;  // v,d + a,tm,wm,fb,fr,pm,pb
  const int n_gear = d_g * n;
  const int n_lam = 2 * (n - 1) * mp.n_speed_bp;  // lambda and tau sets
  const int n_acc = n * mp.n_accel_bp;
  const int n_slack = 2 * n * (1 + mp.n_slack_bp + 1);  // slack, weights, arm
  const int n_term = 1 + mp.n_terminal_bp + 2;          // e, weights, two arms
  CHECK(built.spec.n_vars() == n_core + n_gear + n_lam + n_acc + n_slack + n_term);

  // Rows: dynamics + jerk + per-step powertrain + corridor + penalties.
  const int r_dyn = 2 * n;
  const int r_jerk = n - 1;
  const int r_gear = (4 * d_g + 1) * n;
  const int r_regen = d_g * n;
  const int r_lam = 2 * (n - 1);
  const int r_tau = 3 * (n - 1);
  const int r_force = n;
  const int r_mc = 4 * n;
  const int r_pb = n;
  const int r_cf = 2 * n;
  const int r_acc = 2 * n;
  const int r_slackp = 4 * n;
  const int r_term = 3;  // definition + convexity + link
  CHECK(built.spec.n_rows() == r_dyn + r_jerk + r_gear + r_regen + r_lam + r_tau + r_force +
                                   r_mc + r_pb + r_cf + r_acc + r_slackp + r_term);

  // SOS2 sets: lambda + tau per interior step, comfort per step, two slack
  // penalties per step, one terminal.
  CHECK(built.spec.sos2_sets.size() == static_cast<size_t>(2 * (n - 1) + n + 2 * n + 1));

  auto built2 = build_problem(in, bundle().weights, bundle().three_speed, bundle().mip);
  CHECK(built.spec.serialize() == built2.spec.serialize());
}

TEST_CASE("single-gear problems force the binary on") {
  auto in = nominal_input(12.0, 30.0, 13.0, 10);
  const auto& plant = bundle().single_speed;
  auto built = build_problem(in, bundle().weights, plant, bundle().mip);
  auto heur = [&](const std::vector<double>& r, std::vector<double>* c) {
    return round_and_repair(built, r, plant, bundle().mip, c);
  };
  solver::SolverLimits lim;
  lim.time_budget_s = 0.0;
  lim.node_limit = 400;
  lim.work_limit = 0;
  auto res = solver::solve(built.spec, lim, nullptr, heur);
  REQUIRE(res.has_incumbent);
  auto traj = extract_trajectory(built, res.values);
  for (int k = 0; k < 10; ++k) {
    CHECK(traj.gear[k] == 1);
    CHECK(res.values[built.idx.gear[k][0]] == doctest::Approx(1.0));
  }
}

TEST_CASE("slack stays at zero when the corridor is comfortably satisfiable") {
  auto in = nominal_input(13.0, 22.0, 13.0, 20);
  const auto& plant = bundle().three_speed;
  auto built = build_problem(in, bundle().weights, plant, bundle().mip);
  auto heur = [&](const std::vector<double>& r, std::vector<double>* c) {
    return round_and_repair(built, r, plant, bundle().mip, c);
  };
  solver::SolverLimits lim;
  lim.time_budget_s = 0.0;
  lim.node_limit = 300;
  lim.work_limit = 0;
  auto res = solver::solve(built.spec, lim, nullptr, heur);
  REQUIRE(res.has_incumbent);
  auto traj = extract_trajectory(built, res.values);
  for (int k = 0; k < 20; ++k) {
    CHECK(traj.s_max[k] < 1e-6);
    CHECK(traj.s_min[k] < 1e-6);
  }
}

TEST_CASE("adversarial lead teleport stays feasible through the slacks") {
  auto in = nominal_input(10.0, 25.0, 10.0, 15);
  // Lead teleports 60 m backward mid-horizon: the hard corridor is empty.
  for (size_t i = 15; i < in.lead.position_m.size(); ++i) in.lead.position_m[i] -= 60.0;
  // Keep positions non-decreasing within the prediction to honor the type
  // invariant; the teleport is modeled as a long standstill instead.
  for (size_t i = 1; i < in.lead.position_m.size(); ++i) {
    in.lead.position_m[i] = std::max(in.lead.position_m[i], in.lead.position_m[i - 1]);
  }
  const auto& plant = bundle().three_speed;
  auto built = build_problem(in, bundle().weights, plant, bundle().mip);
  auto heur = [&](const std::vector<double>& r, std::vector<double>* c) {
    return round_and_repair(built, r, plant, bundle().mip, c);
  };
  solver::SolverLimits lim;
  lim.time_budget_s = 0.0;
  lim.node_limit = 200;
  lim.work_limit = 0;
  auto res = solver::solve(built.spec, lim, nullptr, heur);
  CHECK(res.has_incumbent);  // slacks absorb the violation
}

TEST_CASE("warm-start completion is feasible for the encoded problem") {
  auto in = nominal_input(12.0, 30.0, 13.0, 30);
  const auto& plant = bundle().three_speed;
  auto built = build_problem(in, bundle().weights, plant, bundle().mip);
  auto heur = [&](const std::vector<double>& r, std::vector<double>* c) {
    return round_and_repair(built, r, plant, bundle().mip, c);
  };
  solver::SolverLimits lim;
  lim.time_budget_s = 0.0;
  lim.node_limit = 40;
  lim.work_limit = 0;
  auto res = solver::solve(built.spec, lim, nullptr, heur);
  REQUIRE(res.has_incumbent);
  auto traj = extract_trajectory(built, res.values);
  auto x = complete_assignment(built, traj, plant, bundle().mip);
  CHECK(built.spec.max_violation(x) < 1e-6);
  CHECK(built.spec.integer_feasible(x, 1e-6));
}

TEST_CASE("rejects lead predictions shorter than the horizon") {
  auto in = nominal_input();
  in.lead = cruise_lead(30.0, 13.0, 5.0);
  CHECK_THROWS_AS(build_problem(in, bundle().weights, bundle().three_speed, bundle().mip),
                  std::invalid_argument);
}
