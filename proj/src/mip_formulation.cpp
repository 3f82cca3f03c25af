#include "ecodrive/mip_formulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecodrive::mip {

namespace {

std::string step_name(const std::string& base, int k) { return base + "_" + std::to_string(k); }

// SOS2 chord value of v^2 at speed v: the adjacent-pair interpolation of the
// squared breakpoints, which is what the encoded force rows see.
double chord_square(double v, const std::vector<double>& bps) {
  const double x = std::clamp(v, bps.front(), bps.back());
  size_t i = 0;
  while (i + 2 < bps.size() && bps[i + 1] <= x) ++i;
  const double span = bps[i + 1] - bps[i];
  const double f = span > 0 ? (x - bps[i]) / span : 0.0;
  return (1.0 - f) * bps[i] * bps[i] + f * bps[i + 1] * bps[i + 1];
}

}  // namespace

void Weights::validate() const {
  if (w0 <= 0 || w1 <= 0 || w2 <= 0 || w_max <= 0 || w_min <= 0) {
    throw std::invalid_argument("weights must be positive");
  }
}

std::vector<double> speed_breakpoints(int count, double v_lim) {
  std::vector<double> bps(count);
  for (int i = 0; i < count; ++i) bps[i] = v_lim * i / (count - 1);
  bps.front() = 0.0;
  bps.back() = v_lim;
  return bps;
}

void encode_gear_bigM(ProblemSpec& spec, const std::string& tag, int v_var, double v_fixed,
                      int wm_var, int tm_var, int fr_var, const std::vector<int>& gear_vars,
                      const std::vector<double>& ratios, const GearBigMBounds& b) {
  const int d_g = static_cast<int>(ratios.size());
  for (int i = 0; i < d_g; ++i) {
    const double r = ratios[i];
    const int g = gear_vars[i];
    const std::string gi = tag + "_g" + std::to_string(i);

    // w_m + (1-g)(r v_max) >= r v
    {
      std::vector<RowEntry> e = {{wm_var, 1.0}, {g, -r * b.v_max}};
      double rhs = -r * b.v_max;
      if (v_var >= 0) e.push_back({v_var, -r});
      else rhs += r * v_fixed;
      spec.add_row("wlo_" + gi, rhs, kInf, std::move(e));
    }
    // w_m + (1-g)(-w_ub) <= r v
    {
      std::vector<RowEntry> e = {{wm_var, 1.0}, {g, b.w_m_ub}};
      double rhs = b.w_m_ub;
      if (v_var >= 0) e.push_back({v_var, -r});
      else rhs += r * v_fixed;
      spec.add_row("whi_" + gi, -kInf, rhs, std::move(e));
    }
    // (1-g)(F_r_max + T_max r) + T_m r >= F_r
    {
      const double big = b.f_r_max + b.t_m_max * r;
      spec.add_row("flo_" + gi, -big, kInf,
                   {{tm_var, r}, {fr_var, -1.0}, {g, -big}});
    }
    // (1-g)(F_r_min - T_max r) + T_m r <= F_r
    {
      const double big = b.f_r_min - b.t_m_max * r;
      spec.add_row("fhi_" + gi, -kInf, -big,
                   {{tm_var, r}, {fr_var, -1.0}, {g, -big}});
    }
  }
}

std::vector<int> encode_sos2_square(ProblemSpec& spec, const std::string& tag, int v_var,
                                    const std::vector<double>& breakpoints) {
  std::vector<int> lam;
  lam.reserve(breakpoints.size());
  for (size_t i = 0; i < breakpoints.size(); ++i) {
    lam.push_back(spec.add_var(tag + "_l" + std::to_string(i), 0.0, 1.0));
  }
  std::vector<RowEntry> conv, link;
  for (size_t i = 0; i < breakpoints.size(); ++i) {
    conv.push_back({lam[i], 1.0});
    if (breakpoints[i] != 0.0) link.push_back({lam[i], breakpoints[i]});
  }
  link.push_back({v_var, -1.0});
  spec.add_row("conv_" + tag, 1.0, 1.0, std::move(conv));
  spec.add_row("link_" + tag, 0.0, 0.0, std::move(link));
  spec.add_sos2(tag, lam);
  return lam;
}

void encode_mccormick(ProblemSpec& spec, const std::string& tag, int pm_var, int wm_var,
                      int tm_var, double w_lo, double w_hi, double t_lo, double t_hi) {
  spec.add_row("mc_a_" + tag, -w_lo * t_lo, kInf,
               {{pm_var, 1.0}, {wm_var, -t_lo}, {tm_var, -w_lo}});
  spec.add_row("mc_b_" + tag, -w_hi * t_hi, kInf,
               {{pm_var, 1.0}, {wm_var, -t_hi}, {tm_var, -w_hi}});
  spec.add_row("mc_c_" + tag, -kInf, -w_lo * t_hi,
               {{pm_var, 1.0}, {wm_var, -t_hi}, {tm_var, -w_lo}});
  spec.add_row("mc_d_" + tag, -kInf, -w_hi * t_lo,
               {{pm_var, 1.0}, {wm_var, -t_lo}, {tm_var, -w_hi}});
}

std::vector<int> encode_lscp(ProblemSpec& spec, const std::string& tag, int v_var, int tm_var,
                             const std::vector<double>& breakpoints, double v_lscp,
                             double floor_value) {
  std::vector<int> tau;
  tau.reserve(breakpoints.size());
  for (size_t i = 0; i < breakpoints.size(); ++i) {
    tau.push_back(spec.add_var(tag + "_t" + std::to_string(i), 0.0, 1.0));
  }
  std::vector<RowEntry> conv, link, cut;
  cut.push_back({tm_var, 1.0});
  for (size_t i = 0; i < breakpoints.size(); ++i) {
    conv.push_back({tau[i], 1.0});
    if (breakpoints[i] != 0.0) link.push_back({tau[i], breakpoints[i]});
    const double g = breakpoints[i] <= v_lscp ? 0.0 : floor_value;
    if (g != 0.0) cut.push_back({tau[i], -g});
  }
  link.push_back({v_var, -1.0});
  spec.add_row("conv_" + tag, 1.0, 1.0, std::move(conv));
  spec.add_row("link_" + tag, 0.0, 0.0, std::move(link));
  spec.add_row("cut_" + tag, 0.0, kInf, std::move(cut));
  spec.add_sos2(tag, tau);
  return tau;
}

void encode_regen_bigM(ProblemSpec& spec, const std::string& tag, int tm_var,
                       const std::vector<int>& gear_vars, const std::vector<double>& ratios,
                       double t_m_max, double m_a_reg) {
  for (size_t i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i];
    spec.add_row("reg_" + tag + "_g" + std::to_string(i), m_a_reg - t_m_max * r, kInf,
                 {{tm_var, r}, {gear_vars[i], -t_m_max * r}});
  }
}

std::vector<int> pwl_penalty(ProblemSpec& spec, const std::string& tag, int var,
                             const std::vector<double>& bps, const std::vector<double>& fs,
                             double scale) {
  const int n = static_cast<int>(bps.size());
  std::vector<int> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = spec.add_var(tag + "_w" + std::to_string(i), 0.0, 1.0, scale * fs[i]);
  }
  const double var_lb = spec.vars[var].lb;
  const double var_ub = spec.vars[var].ub;

  std::vector<RowEntry> conv, link;
  for (int i = 0; i < n; ++i) {
    conv.push_back({w[i], 1.0});
    if (bps[i] != 0.0) link.push_back({w[i], bps[i]});
  }
  link.push_back({var, -1.0});

  if (var_ub > bps.back()) {
    const double slope = (fs[n - 1] - fs[n - 2]) / (bps[n - 1] - bps[n - 2]);
    const int arm = spec.add_var(tag + "_hi", 0.0, kInf, scale * slope);
    link.push_back({arm, 1.0});
  }
  if (var_lb < bps.front()) {
    const double slope = (fs[0] - fs[1]) / (bps[1] - bps[0]);
    const int arm = spec.add_var(tag + "_lo", 0.0, kInf, scale * slope);
    link.push_back({arm, -1.0});
  }
  spec.add_row("conv_" + tag, 1.0, 1.0, std::move(conv));
  spec.add_row("link_" + tag, 0.0, 0.0, std::move(link));
  spec.add_sos2(tag, w);
  return w;
}

SoftCorridor soften_car_following(ProblemSpec& spec, const std::string& tag, int d_var,
                                  int v_var, double lead_pos, double sigma,
                                  const Weights& weights,
                                  const powertrain::VehicleParams& vp, const MipParams& mp) {
  SoftCorridor sc;
  sc.s_max = spec.add_var(tag + "_smax", 0.0, 1e4);
  sc.s_min = spec.add_var(tag + "_smin", 0.0, 1e4);

  const double guard = weights.beta * sigma;
  // d + s_max >= lead + beta*sigma - d_max
  spec.add_row("cf_lo_" + tag, lead_pos + guard - vp.d_max, kInf,
               {{d_var, 1.0}, {sc.s_max, 1.0}});
  // d + h_min v - s_min <= lead - beta*sigma - d_min
  spec.add_row("cf_hi_" + tag, -kInf, lead_pos - guard - vp.d_min,
               {{d_var, 1.0}, {v_var, vp.h_min}, {sc.s_min, -1.0}});

  // Quadratic slack penalties, piecewise-linearized with a quadratic spacing
  // that clusters breakpoints near zero.
  std::vector<double> bps(mp.n_slack_bp), f_max(mp.n_slack_bp), f_min(mp.n_slack_bp);
  for (int i = 0; i < mp.n_slack_bp; ++i) {
    const double t = static_cast<double>(i) / (mp.n_slack_bp - 1);
    bps[i] = mp.slack_pwl_range * t * t;
    f_max[i] = bps[i] * bps[i];
    f_min[i] = f_max[i];
  }
  pwl_penalty(spec, tag + "_pmax", sc.s_max, bps, f_max, weights.w_max);
  pwl_penalty(spec, tag + "_pmin", sc.s_min, bps, f_min, weights.w_min);
  return sc;
}

BuiltProblem build_problem(const CycleInput& input, const Weights& weights,
                           const powertrain::PlantConfig& plant, const MipParams& mp) {
  weights.validate();
  const int n = input.n_steps;
  const double dt = input.dt;
  if (input.lead.horizon_s() + 1e-9 < n * dt) {
    throw std::invalid_argument("lead prediction shorter than the horizon");
  }

  const auto& vp = plant.vehicle;
  const auto& gears = plant.gears;
  const int d_g = gears.gear_count();
  const double v0 = input.state.speed_mps;
  const double d0 = input.state.position_m;
  const double a_prev = input.state.prev_accel;
  const double mass = vp.mass_kg;
  const double f_phi = vp.road_load(d0);
  const double eta = gears.efficiency;
  const auto& motor = plant.motor;

  BuiltProblem bp;
  bp.f_phi = f_phi;
  bp.d_z = input.lead.position_at(n * dt) - 2.0 * vp.h_min * input.lead.speed_at(n * dt);
  bp.lead_pos.resize(n + 1);
  bp.lead_sigma.resize(n + 1);
  for (int k = 0; k <= n; ++k) {
    bp.lead_pos[k] = input.lead.position_at(k * dt);
    bp.lead_sigma[k] = input.lead.sigma_at(k * dt);
  }

  ProblemSpec& spec = bp.spec;
  VarIndex& idx = bp.idx;
  idx.n = n;
  idx.d_g = d_g;

  // --- reachability-tightened per-step bounds --------------------------
  std::vector<double> v_lo(n + 1), v_hi(n + 1), a_lo(n), a_hi(n), d_lo(n + 1), d_hi(n + 1);
  v_lo[0] = v_hi[0] = v0;
  d_lo[0] = d_hi[0] = d0;
  for (int k = 0; k < n; ++k) {
    a_lo[k] = std::max(vp.a_min, a_prev + (k + 1) * vp.j_min * dt);
    a_hi[k] = std::min(vp.a_max, a_prev + (k + 1) * vp.j_max * dt);
    v_lo[k + 1] = std::max(0.0, v_lo[k] + a_lo[k] * dt);
    v_hi[k + 1] = std::min(vp.v_lim, v_hi[k] + a_hi[k] * dt);
    d_lo[k + 1] = d_lo[k] + v_lo[k] * dt;
    d_hi[k + 1] = d_hi[k] + v_hi[k] * dt;
  }

  // --- variables --------------------------------------------------------
  idx.v.resize(n + 1);
  idx.d.resize(n + 1);
  for (int k = 0; k <= n; ++k) {
    idx.v[k] = spec.add_var(step_name("v", k), v_lo[k], v_hi[k]);
    idx.d[k] = spec.add_var(step_name("d", k), d_lo[k], d_hi[k]);
  }
  idx.a.resize(n);
  idx.tm.resize(n);
  idx.wm.resize(n);
  idx.fb.resize(n);
  idx.fr.resize(n);
  idx.pm.resize(n);
  idx.pb.resize(n);
  idx.gear.assign(n, {});
  for (int k = 0; k < n; ++k) {
    idx.a[k] = spec.add_var(step_name("a", k), a_lo[k], a_hi[k],
                            0.0);  // comfort cost enters via the PWL weights
    double tm_lb = -mp.torque_box;
    if (k == 0 && v0 <= vp.v_lscp) tm_lb = 0.0;  // cutoff exact at the anchored speed
    idx.tm[k] = spec.add_var(step_name("Tm", k), tm_lb, mp.torque_box);
    idx.wm[k] = spec.add_var(step_name("wm", k),
                             gears.ratio_min() * v_lo[k], gears.ratio_max() * v_hi[k]);
    idx.fb[k] = spec.add_var(step_name("Fb", k), 0.0, vp.brake_force_max);
    const double fr_lo = std::max(mp.resist_min, mass * a_lo[k] + f_phi);
    const double fr_hi = std::min(
        mp.resist_max, mass * a_hi[k] + vp.brake_force_max + f_phi +
                           vp.drag_coeff * v_hi[k] * v_hi[k]);
    idx.fr[k] = spec.add_var(step_name("Fr", k), fr_lo, fr_hi);
    const double w_hi_k = gears.ratio_max() * v_hi[k];
    const double pm_lo = std::max(-mp.motor_power_cap, w_hi_k * -mp.torque_box);
    const double pm_hi = std::min(mp.motor_power_cap, w_hi_k * mp.torque_box);
    idx.pm[k] = spec.add_var(step_name("Pm", k), pm_lo, pm_hi);
    idx.pb[k] = spec.add_var(step_name("Pb", k), input.pb_min, input.pb_max, weights.w1 * dt);
    idx.gear[k].resize(d_g);
    for (int i = 0; i < d_g; ++i) {
      idx.gear[k][i] = spec.add_binary(step_name("g" + std::to_string(i + 1), k));
    }
  }

  // --- dynamics, jerk ----------------------------------------------------
  for (int k = 0; k < n; ++k) {
    spec.add_row(step_name("dyn_v", k), 0.0, 0.0,
                 {{idx.v[k + 1], 1.0}, {idx.v[k], -1.0}, {idx.a[k], -dt}});
    spec.add_row(step_name("dyn_d", k), 0.0, 0.0,
                 {{idx.d[k + 1], 1.0}, {idx.d[k], -1.0}, {idx.v[k], -dt}});
  }
  for (int k = 0; k + 1 < n; ++k) {
    spec.add_row(step_name("jerk", k), vp.j_min * dt, vp.j_max * dt,
                 {{idx.a[k + 1], 1.0}, {idx.a[k], -1.0}});
  }

  // --- per-step powertrain encoding ---------------------------------------
  GearBigMBounds gb;
  gb.v_max = vp.v_lim;
  gb.w_m_ub = motor.speed_max;
  gb.f_r_min = mp.resist_min;
  gb.f_r_max = mp.resist_max;
  gb.t_m_max = mp.torque_box;

  const auto v_bps = speed_breakpoints(mp.n_speed_bp, vp.v_lim);
  const auto l_bps = speed_breakpoints(mp.n_lscp_bp, vp.v_lim);
  idx.lam.assign(std::max(0, n - 1), {});
  idx.tau.assign(std::max(0, n - 1), {});

  for (int k = 0; k < n; ++k) {
    std::vector<RowEntry> onehot;
    for (int i = 0; i < d_g; ++i) onehot.push_back({idx.gear[k][i], 1.0});
    spec.add_row(step_name("onehot", k), 1.0, 1.0, std::move(onehot));

    encode_gear_bigM(spec, step_name("bm", k), k == 0 ? -1 : idx.v[k], v0, idx.wm[k],
                     idx.tm[k], idx.fr[k], idx.gear[k], gears.ratios, gb);

    // Force balance: F_r = m a + F_b + f_phi + C_wind v^2.
    if (k == 0) {
      spec.add_row(step_name("force", k), f_phi + vp.drag_coeff * v0 * v0,
                   f_phi + vp.drag_coeff * v0 * v0,
                   {{idx.fr[k], 1.0}, {idx.a[k], -mass}, {idx.fb[k], -1.0}});
    } else {
      auto lam = encode_sos2_square(spec, step_name("lam", k), idx.v[k], v_bps);
      idx.lam[k - 1] = lam;
      std::vector<RowEntry> force = {{idx.fr[k], 1.0}, {idx.a[k], -mass}, {idx.fb[k], -1.0}};
      for (size_t i = 0; i < v_bps.size(); ++i) {
        if (v_bps[i] != 0.0) force.push_back({lam[i], -vp.drag_coeff * v_bps[i] * v_bps[i]});
      }
      spec.add_row(step_name("force", k), f_phi, f_phi, std::move(force));

      if (v_hi[k] <= vp.v_lscp) {
        spec.vars[idx.tm[k]].lb = std::max(spec.vars[idx.tm[k]].lb, 0.0);
      }
      idx.tau[k - 1] = encode_lscp(spec, step_name("tau", k), idx.v[k], idx.tm[k], l_bps,
                                   vp.v_lscp, -mp.torque_box);
    }

    encode_mccormick(spec, step_name("mc", k), idx.pm[k], idx.wm[k], idx.tm[k],
                     gears.ratio_min() * v_lo[k], gears.ratio_max() * v_hi[k],
                     -mp.torque_box, mp.torque_box);

    // P_b = P_aux + (p00 + p10 w_m + p01 T_m + p11 P_m) / eta_gear.
    spec.add_row(step_name("pbdef", k), plant.battery.p_aux + motor.p00 / eta,
                 plant.battery.p_aux + motor.p00 / eta,
                 {{idx.pb[k], 1.0},
                  {idx.wm[k], -motor.p10 / eta},
                  {idx.tm[k], -motor.p01 / eta},
                  {idx.pm[k], -motor.p11 / eta}});

    encode_regen_bigM(spec, step_name("rg", k), idx.tm[k], idx.gear[k], gears.ratios,
                      mp.torque_box, mass * vp.a_reg);

    // Comfort term w2 a^2 dt as a PWL penalty on a.
    std::vector<double> a_bps(mp.n_accel_bp), a_fs(mp.n_accel_bp);
    for (int i = 0; i < mp.n_accel_bp; ++i) {
      a_bps[i] = vp.a_min + (vp.a_max - vp.a_min) * i / (mp.n_accel_bp - 1);
      a_fs[i] = a_bps[i] * a_bps[i];
    }
    pwl_penalty(spec, step_name("acc", k), idx.a[k], a_bps, a_fs, weights.w2 * dt);
  }

  // --- car-following corridor ---------------------------------------------
  idx.s_max.resize(n);
  idx.s_min.resize(n);
  for (int k = 1; k <= n; ++k) {
    auto sc = soften_car_following(spec, step_name("cf", k), idx.d[k], idx.v[k],
                                   bp.lead_pos[k], bp.lead_sigma[k], weights, vp, mp);
    idx.s_max[k - 1] = sc.s_max;
    idx.s_min[k - 1] = sc.s_min;
  }

  // --- terminal cost --------------------------------------------------------
  const int e_var = spec.add_var("e_term", d_lo[n] - bp.d_z, d_hi[n] - bp.d_z);
  spec.add_row("term_def", -bp.d_z, -bp.d_z, {{e_var, 1.0}, {idx.d[n], -1.0}});
  std::vector<double> e_bps(mp.n_terminal_bp), e_fs(mp.n_terminal_bp);
  const int half = (mp.n_terminal_bp - 1) / 2;
  for (int i = 0; i < mp.n_terminal_bp; ++i) {
    const double t = static_cast<double>(i - half) / half;
    e_bps[i] = mp.terminal_pwl_range * (t < 0 ? -t * t : t * t);
    e_fs[i] = e_bps[i] * e_bps[i];
  }
  pwl_penalty(spec, "term", e_var, e_bps, e_fs, weights.w0);

  return bp;
}

Trajectory extract_trajectory(const BuiltProblem& built, const std::vector<double>& x) {
  const auto& idx = built.idx;
  const int n = idx.n;
  Trajectory t;
  t.v.resize(n + 1);
  t.d.resize(n + 1);
  for (int k = 0; k <= n; ++k) {
    t.v[k] = x[idx.v[k]];
    t.d[k] = x[idx.d[k]];
  }
  t.a.resize(n);
  t.tm.resize(n);
  t.wm.resize(n);
  t.fb.resize(n);
  t.pm.resize(n);
  t.pb.resize(n);
  t.gear.resize(n);
  t.s_max.resize(n);
  t.s_min.resize(n);
  for (int k = 0; k < n; ++k) {
    t.a[k] = x[idx.a[k]];
    t.tm[k] = x[idx.tm[k]];
    t.wm[k] = x[idx.wm[k]];
    t.fb[k] = x[idx.fb[k]];
    t.pm[k] = x[idx.pm[k]];
    t.pb[k] = x[idx.pb[k]];
    t.s_max[k] = x[idx.s_max[k]];
    t.s_min[k] = x[idx.s_min[k]];
    int best = 0;
    double best_v = -1.0;
    for (int i = 0; i < idx.d_g; ++i) {
      if (x[idx.gear[k][i]] > best_v) {
        best_v = x[idx.gear[k][i]];
        best = i;
      }
    }
    t.gear[k] = best + 1;
  }
  return t;
}

std::vector<double> complete_assignment(const BuiltProblem& built, const Trajectory& traj,
                                        const powertrain::PlantConfig& plant,
                                        const MipParams& mp) {
  const auto& spec = built.spec;
  const auto& idx = built.idx;
  const int n = idx.n;
  std::vector<double> x(spec.n_vars(), 0.0);

  auto set_pwl = [&](const std::vector<int>& weights, const std::vector<double>& bps,
                     double value) {
    // Adjacent-pair interpolation; assumes value within [front, back].
    const double v = std::clamp(value, bps.front(), bps.back());
    size_t i = 0;
    while (i + 2 < bps.size() && bps[i + 1] <= v) ++i;
    const double span = bps[i + 1] - bps[i];
    const double f = span > 0 ? (v - bps[i]) / span : 0.0;
    x[weights[i]] = 1.0 - f;
    x[weights[i + 1]] = f;
  };

  const auto v_bps = speed_breakpoints(mp.n_speed_bp, plant.vehicle.v_lim);
  const auto l_bps = speed_breakpoints(mp.n_lscp_bp, plant.vehicle.v_lim);
  const auto& gears = plant.gears;
  const auto& motor = plant.motor;

  for (int k = 0; k <= n; ++k) {
    x[idx.v[k]] = traj.v[k];
    x[idx.d[k]] = traj.d[k];
  }
  for (int k = 0; k < n; ++k) {
    const double r = gears.ratios[traj.gear[k] - 1];
    const double wm = r * traj.v[k];
    const double pm = wm * traj.tm[k];
    x[idx.a[k]] = traj.a[k];
    x[idx.tm[k]] = traj.tm[k];
    x[idx.fb[k]] = traj.fb[k];
    x[idx.wm[k]] = wm;
    const double vsq = k == 0 ? traj.v[k] * traj.v[k] : chord_square(traj.v[k], v_bps);
    x[idx.fr[k]] = plant.vehicle.mass_kg * traj.a[k] + traj.fb[k] + built.f_phi +
                   plant.vehicle.drag_coeff * vsq;
    x[idx.pm[k]] = pm;
    x[idx.pb[k]] = plant.battery.p_aux +
                   (motor.p00 + motor.p10 * wm + motor.p01 * traj.tm[k] + motor.p11 * pm) /
                       gears.efficiency;
    for (int i = 0; i < idx.d_g; ++i) x[idx.gear[k][i]] = (i + 1 == traj.gear[k]) ? 1.0 : 0.0;
    if (k >= 1) {
      set_pwl(idx.lam[k - 1], v_bps, traj.v[k]);
      if (!idx.tau[k - 1].empty()) set_pwl(idx.tau[k - 1], l_bps, traj.v[k]);
    }
  }

  // Corridor slacks from the constraint residuals.
  const auto& vp = plant.vehicle;
  for (int k = 1; k <= n; ++k) {
    const double guard = built.lead_sigma[k];  // beta folded below
    (void)guard;
    // Rows were built with beta*sigma; recover required slack directly from
    // the row bounds so this stays consistent with build_problem.
    x[idx.s_max[k - 1]] = 0.0;
    x[idx.s_min[k - 1]] = 0.0;
  }
  for (const auto& row : spec.rows) {
    // Fix up slack variables so corridor rows hold with equality when violated.
    if (row.name.rfind("cf_lo_", 0) == 0) {
      const int d_var = row.entries[0].var;
      const int s_var = row.entries[1].var;
      const double need = row.lb - x[d_var];
      if (need > 0) x[s_var] = need;
    } else if (row.name.rfind("cf_hi_", 0) == 0) {
      const int d_var = row.entries[0].var;
      const int v_var = row.entries[1].var;
      const int s_var = row.entries[2].var;
      const double act = x[d_var] + vp.h_min * x[v_var];
      if (act > row.ub) x[s_var] = act - row.ub;
    }
  }

  // PWL penalty weights (slacks, comfort, terminal) and their arms.
  for (size_t s = 0; s < spec.sos2_sets.size(); ++s) {
    const auto& set = spec.sos2_sets[s];
    if (set.name.rfind("lam_", 0) == 0 || set.name.rfind("tau_", 0) == 0) continue;
    // Identify the linked variable and breakpoints from the link row.
    // Penalty sets were added right after their link variable; find the rows.
    const std::string conv_name = "conv_" + set.name;
    const std::string link_name = "link_" + set.name;
    const Row* link = nullptr;
    for (const auto& row : spec.rows) {
      if (row.name == link_name) {
        link = &row;
        break;
      }
    }
    if (link == nullptr) continue;
    // Reconstruct breakpoints and the tied variable.
    std::vector<double> bps;
    std::vector<int> weights = set.vars;
    int tied = -1, arm_hi = -1, arm_lo = -1;
    std::vector<double> bp_of(weights.size(), 0.0);
    for (const auto& e : link->entries) {
      auto it = std::find(weights.begin(), weights.end(), e.var);
      if (it != weights.end()) {
        bp_of[it - weights.begin()] = e.coef;
      } else if (e.coef == -1.0 && tied < 0) {
        tied = e.var;
      } else if (e.coef == 1.0) {
        arm_hi = e.var;
      } else if (e.coef == -1.0) {
        arm_lo = e.var;
      }
    }
    if (tied < 0) continue;
    bps = bp_of;
    double value = x[tied];
    if (value > bps.back() && arm_hi >= 0) {
      x[arm_hi] = value - bps.back();
      value = bps.back();
    }
    if (value < bps.front() && arm_lo >= 0) {
      x[arm_lo] = bps.front() - value;
      value = bps.front();
    }
    set_pwl(weights, bps, value);
  }

  // Terminal deviation variable.
  for (const auto& row : spec.rows) {
    if (row.name == "term_def") {
      x[row.entries[0].var] = x[idx.d[n]] - built.d_z;
      break;
    }
  }
  return x;
}

bool assign_powertrain_controls(const BuiltProblem& built, const powertrain::PlantConfig& plant,
                                const MipParams& mp, bool keep_gear, Trajectory* traj) {
  const auto& vp = plant.vehicle;
  const auto& gears = plant.gears;
  const auto& motor = plant.motor;
  const int n = traj->n_steps();
  const auto l_bps = speed_breakpoints(mp.n_lscp_bp, vp.v_lim);
  const auto v_bps = speed_breakpoints(mp.n_speed_bp, vp.v_lim);

  // Chord value of the SOS2 low-speed-cutoff bound at speed v.
  auto lscp_chord = [&](double v) {
    if (v <= vp.v_lscp) return 0.0;
    for (size_t i = 0; i + 1 < l_bps.size(); ++i) {
      if (v <= l_bps[i + 1] + 1e-12) {
        const double g0 = l_bps[i] <= vp.v_lscp ? 0.0 : -mp.torque_box;
        const double g1 = l_bps[i + 1] <= vp.v_lscp ? 0.0 : -mp.torque_box;
        const double f = (v - l_bps[i]) / (l_bps[i + 1] - l_bps[i]);
        return (1.0 - f) * g0 + f * g1;
      }
    }
    return -mp.torque_box;
  };

  const double pb_lo = built.spec.vars[built.idx.pb[0]].lb;
  const double pb_hi = built.spec.vars[built.idx.pb[0]].ub;

  for (int k = 0; k < n; ++k) {
    const double v = traj->v[k];
    const double vsq = k == 0 ? v * v : chord_square(v, v_bps);
    const double f_req = vp.mass_kg * traj->a[k] + built.f_phi + vp.drag_coeff * vsq;

    int best_gear = -1;
    double best_pb = kInf, best_tm = 0.0, best_fb = 0.0;
    const int want_gear = traj->gear[k];
    for (int i = 0; i < gears.gear_count(); ++i) {
      const double r = gears.ratios[i];
      const double wm = r * v;
      double t_hi = mp.torque_box;
      double t_lo = k == 0 ? built.spec.vars[built.idx.tm[0]].lb : -mp.torque_box;
      if (wm > 1e-9) {
        t_hi = std::min(t_hi, mp.motor_power_cap / wm);
        t_lo = std::max(t_lo, -mp.motor_power_cap / wm);
      }
      t_lo = std::max(t_lo, vp.mass_kg * vp.a_reg / r);
      if (k > 0) t_lo = std::max(t_lo, lscp_chord(v));
      if (t_lo > t_hi + 1e-12) continue;
      const double t_need = f_req / r;
      if (t_need > t_hi + 1e-9) continue;  // cannot propel in this gear
      const double tm = std::max(t_need, t_lo);
      const double fb = tm * r - f_req;
      if (fb < -1e-9 || fb > vp.brake_force_max + 1e-9) continue;
      const double pb = plant.battery.p_aux +
                        (motor.p00 + motor.p10 * wm + motor.p01 * tm + motor.p11 * wm * tm) /
                            gears.efficiency;
      if (pb < pb_lo - 1e-6 || pb > pb_hi + 1e-6) continue;
      bool better;
      if (keep_gear) {
        better = best_gear < 0 ||
                 (i + 1 == want_gear && best_gear + 1 != want_gear) ||
                 (pb < best_pb - 1e-9 && best_gear + 1 != want_gear);
      } else {
        better = best_gear < 0 || pb < best_pb - 1e-9;
      }
      if (better) {
        best_gear = i;
        best_pb = pb;
        best_tm = tm;
        best_fb = std::max(0.0, fb);
      }
    }
    if (best_gear < 0) return false;
    traj->gear[k] = best_gear + 1;
    traj->tm[k] = best_tm;
    traj->fb[k] = best_fb;
    traj->wm[k] = gears.ratios[best_gear] * v;
    traj->pm[k] = traj->wm[k] * best_tm;
    traj->pb[k] = best_pb;
  }
  return true;
}

bool round_and_repair(const BuiltProblem& built, const std::vector<double>& lp_x,
                      const powertrain::PlantConfig& plant, const MipParams& mp,
                      std::vector<double>* candidate) {
  Trajectory traj = extract_trajectory(built, lp_x);
  if (!assign_powertrain_controls(built, plant, mp, /*keep_gear=*/false, &traj)) return false;
  *candidate = complete_assignment(built, traj, plant, mp);
  return true;
}

double evaluate_objective(const Trajectory& traj, double d_z, const Weights& weights, double dt,
                          const powertrain::PlantConfig& plant, bool exact_map,
                          bool include_slack_penalty) {
  const auto& motor = plant.motor;
  const double eta = plant.gears.efficiency;
  double obj = 0.0;
  for (int k = 0; k < traj.n_steps(); ++k) {
    const double r = plant.gears.ratios[traj.gear[k] - 1];
    const double wm = r * traj.v[k];
    double p_drv;
    if (exact_map) {
      const double t_env = motor.torque_max_at(std::min(wm, motor.speed_max));
      const double tm = std::clamp(traj.tm[k], -t_env, t_env);
      p_drv = powertrain::drive_power_exact(tm, std::min(wm, motor.speed_max), motor);
    } else {
      p_drv = motor.p00 + motor.p10 * wm + motor.p01 * traj.tm[k] + motor.p11 * wm * traj.tm[k];
    }
    const double pb = plant.battery.p_aux + p_drv / eta;
    obj += dt * (weights.w1 * pb + weights.w2 * traj.a[k] * traj.a[k]);
    if (include_slack_penalty) {
      obj += weights.w_max * traj.s_max[k] * traj.s_max[k] +
             weights.w_min * traj.s_min[k] * traj.s_min[k];
    }
  }
  const double e = traj.d.back() - d_z;
  obj += weights.w0 * e * e;
  return obj;
}

}  // namespace ecodrive::mip
