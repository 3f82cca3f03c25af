#include "ecodrive/mpc_controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace ecodrive::mpc {

namespace {

using powertrain::battery_power;

// Shift the previous plan by the replan period, pad with its final step and
// re-integrate from the measured state under jerk/accel/speed bounds.
mip::Trajectory shift_plan(const mip::Trajectory& prev, const powertrain::VehicleState& state,
                           const powertrain::VehicleParams& vp, int shift, double dt) {
  const int n = prev.n_steps();
  mip::Trajectory t;
  t.v.assign(n + 1, 0.0);
  t.d.assign(n + 1, 0.0);
  t.a.assign(n, 0.0);
  t.tm.assign(n, 0.0);
  t.wm.assign(n, 0.0);
  t.fb.assign(n, 0.0);
  t.pm.assign(n, 0.0);
  t.pb.assign(n, 0.0);
  t.gear.assign(n, state.gear);
  t.s_max.assign(n, 0.0);
  t.s_min.assign(n, 0.0);

  t.v[0] = state.speed_mps;
  t.d[0] = state.position_m;
  double a_prev = state.prev_accel;
  for (int k = 0; k < n; ++k) {
    const int src = std::min(k + shift, n - 1);
    double a = prev.a[src];
    a = std::clamp(a, a_prev + vp.j_min * dt, a_prev + vp.j_max * dt);
    a = std::clamp(a, vp.a_min, vp.a_max);
    double v_next = std::clamp(t.v[k] + a * dt, 0.0, vp.v_lim);
    a = (v_next - t.v[k]) / dt;
    t.a[k] = a;
    t.v[k + 1] = v_next;
    t.d[k + 1] = t.d[k] + t.v[k] * dt;
    t.gear[k] = prev.gear[src];
    a_prev = a;
  }
  return t;
}

}  // namespace

Controller::Controller(const config::Bundle& bundle, config::Variant variant)
    : bundle_(bundle), variant_(variant), plant_(bundle_.plant(variant)) {}

CyclePlan Controller::fallback_plan(const powertrain::VehicleState& state,
                                    const estimation::LeadPrediction& lead) const {
  const auto& vp = plant_.vehicle;
  const int n = bundle_.controller.n_steps();
  const double dt = bundle_.controller.control_dt;

  mip::Trajectory base;
  base.a.assign(n, vp.a_reg);
  base.gear.assign(n, state.gear);
  base.v.assign(n + 1, 0.0);
  base.d.assign(n + 1, 0.0);
  base.tm.assign(n, 0.0);
  base.wm.assign(n, 0.0);
  base.fb.assign(n, 0.0);
  base.pm.assign(n, 0.0);
  base.pb.assign(n, 0.0);
  base.s_max.assign(n, 0.0);
  base.s_min.assign(n, 0.0);
  mip::Trajectory t = shift_plan(base, state, vp, 0, dt);

  // Regen-first torque split against the plant envelope.
  const double f_phi = vp.road_load(state.position_m);
  for (int k = 0; k < n; ++k) {
    const double r = plant_.gears.ratios[t.gear[k] - 1];
    const double wm = std::min(r * t.v[k], plant_.motor.speed_max);
    const double f_req = vp.mass_kg * t.a[k] + f_phi + vp.drag_coeff * t.v[k] * t.v[k];
    const double t_cap = plant_.motor.torque_max_at(wm);
    double t_lo = std::max(-t_cap, vp.mass_kg * vp.a_reg / r);
    if (t.v[k] <= vp.v_lscp) t_lo = std::max(t_lo, 0.0);
    t.tm[k] = std::clamp(f_req / r, t_lo, t_cap);
    t.fb[k] = std::clamp(t.tm[k] * r - f_req, 0.0, vp.brake_force_max);
    t.wm[k] = wm;
    t.pm[k] = wm * t.tm[k];
  }

  CyclePlan plan;
  plan.traj = t;
  plan.d_z = lead.position_at(bundle_.controller.horizon_s) -
             2.0 * vp.h_min * lead.speed_at(bundle_.controller.horizon_s);
  plan.fallback = true;
  plan.solve_status = "fallback";
  return plan;
}

CyclePlan Controller::run_cycle(const powertrain::VehicleState& state,
                                const estimation::LeadPrediction& lead) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& battery = plant_.battery;
  const int n = bundle_.controller.n_steps();
  const double dt = bundle_.controller.control_dt;
  const int shift = bundle_.controller.applied_steps();

  mip::CycleInput input;
  input.state = state;
  input.lead = lead;
  input.n_steps = n;
  input.dt = dt;
  // Battery linearization frozen at the cycle-start SOC.
  input.pack_voc_frozen = battery.n_series * battery.voc.at(state.soc);
  input.pack_rb_frozen =
      (static_cast<double>(battery.n_series) / battery.n_parallel) * battery.resistance.at(state.soc);
  input.pb_min = battery_power(battery.i_charge.at(state.soc), state.soc, battery);
  input.pb_max = battery_power(battery.i_discharge.at(state.soc), state.soc, battery);

  mip::BuiltProblem built;
  try {
    built = mip::build_problem(input, bundle_.weights, plant_, bundle_.mip);
  } catch (const std::exception&) {
    CyclePlan plan = fallback_plan(state, lead);
    prev_plan_ = plan.traj;
    return plan;
  }

  std::vector<double> warm;
  bool have_warm = false;
  if (prev_plan_.has_value()) {
    mip::Trajectory shifted = shift_plan(*prev_plan_, state, plant_.vehicle, shift, dt);
    if (mip::assign_powertrain_controls(built, plant_, bundle_.mip, /*keep_gear=*/true,
                                        &shifted)) {
      warm = mip::complete_assignment(built, shifted, plant_, bundle_.mip);
      have_warm = true;
    }
  }

  auto heuristic = [&](const std::vector<double>& relax, std::vector<double>* cand) {
    return mip::round_and_repair(built, relax, plant_, bundle_.mip, cand);
  };

  solver::SolverLimits limits = bundle_.limits;
  if (first_cycle_ && limits.work_limit > 0) limits.work_limit *= 4;

  solver::MipResult res =
      solver::solve(built.spec, limits, have_warm ? &warm : nullptr, heuristic,
                    have_root_basis_ ? &root_basis_ : nullptr, &root_basis_);
  have_root_basis_ = true;
  first_cycle_ = false;

  CyclePlan plan;
  if (res.has_incumbent) {
    plan.traj = mip::extract_trajectory(built, res.values);
    plan.d_z = built.d_z;
    plan.rel_gap = res.rel_gap;
  } else {
    plan = fallback_plan(state, lead);
  }
  plan.nodes = res.nodes;
  plan.lp_iterations = res.lp_iterations;
  plan.solve_status = res.status_string();
  plan.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  prev_plan_ = plan.traj;
  return plan;
}

EpisodeLog run_episode(const EpisodeSetup& setup, const config::Bundle& bundle,
                       config::Variant variant) {
  EpisodeLog log;
  const auto& plant = bundle.plant(variant);
  const auto& vp = plant.vehicle;
  const double dt_traffic = bundle.traffic.dt;
  const double dt_control = bundle.controller.control_dt;
  const double replan = bundle.controller.replan_period_s;
  const int traffic_per_cycle = static_cast<int>(replan / dt_traffic + 0.5);
  const int control_stride = static_cast<int>(dt_control / dt_traffic + 0.5);

  auto platoon = scenario::generate_lead_trace(setup.sc, setup.seed);
  const auto& lead_trace = platoon.vehicles.back();

  powertrain::VehicleState state;
  state.position_m = lead_trace.points.front().pos_m - setup.ego_gap_behind;
  state.speed_mps = std::max(0.0, lead_trace.points.front().speed_mps);
  state.soc = setup.soc_start;
  state.gear = plant.gears.gear_count() >= 2 ? 2 : 1;
  log.soc_start = state.soc;
  const double d_start = state.position_m;

  Controller controller(bundle, variant);
  scenario::TrafficTracker tracker(bundle.traffic, bundle.ukf, setup.sc.signals,
                                   lead_trace.points.front().pos_m - bundle.traffic.cell_length);

  std::mt19937_64 noise_rng(setup.seed * 0x9e3779b97f4a7c15ULL + 17);
  std::normal_distribution<double> gauss(0.0, bundle.ukf.noise.measurement_std);

  const int n_cycles = static_cast<int>(setup.sc.duration_s / replan);
  double low_speed_time = 0.0;
  bool stopped_now = false;

  auto measurements_at = [&](double t) {
    std::vector<estimation::CvMeasurement> ms;
    // The immediate preceding vehicle is always sensed onboard.
    const auto lp = lead_trace.at(t);
    ms.push_back({static_cast<int>(platoon.vehicles.size()) - 1, lp.pos_m,
                  std::max(0.0, lp.speed_mps +
                                    (setup.measurement_noise ? gauss(noise_rng) : 0.0)),
                  tracker.step()});
    for (size_t i = 0; i + 1 < platoon.vehicles.size(); ++i) {
      if (!platoon.is_cv[i]) continue;
      const auto p = platoon.vehicles[i].at(t);
      if (std::abs(p.pos_m - state.position_m) > setup.sc.platoon.comm_range_m) continue;
      ms.push_back({static_cast<int>(i), p.pos_m,
                    std::max(0.0, p.speed_mps +
                                      (setup.measurement_noise ? gauss(noise_rng) : 0.0)),
                    tracker.step()});
    }
    return ms;
  };

  for (int cycle = 0; cycle < n_cycles; ++cycle) {
    const double t_cycle = cycle * replan;
    const auto lead_now = lead_trace.at(t_cycle);

    estimation::LeadPrediction pred;
    try {
      pred = tracker.predict_lead_absolute(lead_now.pos_m, lead_now.speed_mps,
                                           bundle.controller.horizon_s);
    } catch (const std::exception& e) {
      log.failure = std::string("prediction failed: ") + e.what();
      return log;
    }

    CyclePlan plan = controller.run_cycle(state, pred);
    if (plan.fallback) ++log.fallback_cycles;
    log.cycle_solve_ms.push_back(plan.solve_seconds * 1e3);
    log.cycle_gap.push_back(plan.rel_gap);

    for (int sub = 0; sub < traffic_per_cycle; ++sub) {
      const double t_now = t_cycle + sub * dt_traffic;
      if (sub % control_stride == 0) {
        const int k = sub / control_stride;

        // Project the planned controls onto the plant-exact envelope.
        const double r = plant.gears.ratios[plan.traj.gear[k] - 1];
        const double wm = r * state.speed_mps;
        const double t_cap = plant.motor.torque_max_at(std::min(wm, plant.motor.speed_max));
        double t_lo = std::max(-t_cap, vp.mass_kg * vp.a_reg / r);
        if (state.speed_mps <= vp.v_lscp) t_lo = std::max(t_lo, 0.0);
        double t_hi = t_cap;
        // Battery window at the current SOC (monotone power in torque).
        const double pb_lo = battery_power(plant.battery.i_charge.at(state.soc), state.soc,
                                           plant.battery);
        const double pb_hi = battery_power(plant.battery.i_discharge.at(state.soc), state.soc,
                                           plant.battery);
        auto pb_of = [&](double tm) {
          return plant.battery.p_aux +
                 powertrain::drive_power_exact(tm, std::min(wm, plant.motor.speed_max),
                                               plant.motor) /
                     plant.gears.efficiency;
        };
        for (int it = 0; it < 40 && pb_of(t_hi) > pb_hi; ++it) t_hi = t_lo + 0.75 * (t_hi - t_lo);
        for (int it = 0; it < 40 && pb_of(t_lo) < pb_lo; ++it) t_lo = t_hi - 0.75 * (t_hi - t_lo);

        powertrain::Controls ctl;
        ctl.gear = plan.traj.gear[k];
        ctl.motor_torque = std::clamp(plan.traj.tm[k], t_lo, t_hi);
        const double delta_t = ctl.motor_torque - plan.traj.tm[k];
        ctl.brake_force = std::clamp(plan.traj.fb[k] + delta_t * r, 0.0, vp.brake_force_max);

        const double proj_frac =
            std::max(std::abs(delta_t) / (2.0 * bundle.mip.torque_box),
                     std::abs(ctl.brake_force - std::clamp(plan.traj.fb[k] + delta_t * r,
                                                           -1e18, 1e18)) /
                         vp.brake_force_max);
        log.projection_frac_max = std::max(log.projection_frac_max, proj_frac);

        powertrain::StepInfo info;
        powertrain::VehicleState next;
        try {
          next = powertrain::simulate_step(state, ctl, dt_control, plant, &info);
        } catch (const std::exception& e) {
          log.failure = std::string("plant infeasible at t=") + std::to_string(t_now) + ": " +
                        e.what();
          return log;
        }

        StepRecord rec;
        rec.t_s = t_now;
        rec.d_m = state.position_m;
        rec.v_mps = state.speed_mps;
        rec.a_mps2 = info.accel;
        rec.gear = ctl.gear;
        rec.tm_nm = ctl.motor_torque;
        rec.fb_n = ctl.brake_force;
        rec.pb_w = info.battery_power;
        rec.soc = next.soc;
        rec.s_max_m = plan.traj.s_max[k];
        rec.s_min_m = plan.traj.s_min[k];
        rec.solve_ms = plan.solve_seconds * 1e3;
        rec.gap = plan.rel_gap;
        log.steps.push_back(rec);

        log.slack_max_max = std::max(log.slack_max_max, plan.traj.s_max[k]);
        log.slack_min_max = std::max(log.slack_min_max, plan.traj.s_min[k]);

        // Energy bookkeeping.
        const double r_pack = (static_cast<double>(plant.battery.n_series) /
                               plant.battery.n_parallel) *
                              plant.battery.resistance.at(state.soc);
        log.energy_pb_j += info.battery_power * dt_control;
        log.energy_loss_j += info.current * info.current * r_pack * dt_control;
        log.charge_as += info.current * dt_control;
        if (info.battery_power < 0.0) log.energy_regen_j += info.battery_power * dt_control;
        else if (info.accel >= 0.2) log.energy_accel_j += info.battery_power * dt_control;
        else log.energy_cruise_j += info.battery_power * dt_control;

        // Stop detection: sustained sub-walking-speed for a second.
        if (state.speed_mps < 0.3) {
          low_speed_time += dt_control;
          if (low_speed_time >= 1.0 && !stopped_now) {
            ++log.stop_count;
            stopped_now = true;
          }
        } else {
          low_speed_time = 0.0;
          stopped_now = false;
        }

        state = next;
      }
      tracker.advance(measurements_at(t_cycle + (sub + 1) * dt_traffic));
    }
  }

  log.completed = true;
  log.soc_end = state.soc;
  log.distance_m = state.position_m - d_start;
  return log;
}

}  // namespace ecodrive::mpc
