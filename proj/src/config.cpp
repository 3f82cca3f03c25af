#include "ecodrive/config.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ecodrive::config {

namespace {

using nlohmann::json;

powertrain::MotorMap make_motor_map() {
  powertrain::MotorMap map;
  const double t_rated = 250.0;   // N m, constant-torque region
  const double p_rated = 110e3;   // W, mechanical cap
  const double w_max = 1100.0;    // rad/s

  for (double w = 0.0; w <= w_max + 1e-9; w += 50.0) map.speed_grid.push_back(w);
  for (double t = -t_rated; t <= t_rated + 1e-9; t += 25.0) map.torque_grid.push_back(t);

  // Smooth synthetic efficiency surface: peak 0.95 at mid speed / mid torque,
  // falling toward 0.60 at the envelope edges.
  const double w_peak = 550.0, t_peak = 90.0;
  const double w_span = 330.0, t_span = 120.0;
  for (double w : map.speed_grid) {
    for (double t : map.torque_grid) {
      const double qw = (w - w_peak) / w_span;
      const double qt = (std::abs(t) - t_peak) / t_span;
      const double eta = 0.60 + 0.35 * std::exp(-0.5 * (qw * qw + qt * qt));
      map.efficiency.push_back(eta);
    }
  }
  for (double w : map.speed_grid) {
    map.torque_max_curve.push_back(std::min(t_rated, p_rated / std::max(w, 1.0)));
  }
  map.speed_min = 0.0;
  map.speed_max = w_max;

  const auto fit = powertrain::fit_drive_power_polynomial(map);
  map.p00 = fit.p00;
  map.p10 = fit.p10;
  map.p01 = fit.p01;
  map.p11 = fit.p11;
  return map;
}

powertrain::BatteryPack make_battery() {
  powertrain::BatteryPack pack;
  pack.n_series = 96;
  pack.n_parallel = 4;
  pack.capacity_As = 576000.0;  // 160 Ah at pack current
  pack.p_aux = 500.0;

  for (double s = 0.0; s <= 1.0 + 1e-9; s += 0.1) {
    pack.voc.soc.push_back(s);
    pack.voc.value.push_back(3.2 + 0.9 * s);
    pack.resistance.soc.push_back(s);
    pack.resistance.value.push_back(0.0024 - 0.0008 * s);
  }
  pack.i_charge.soc = {0.0, 0.8, 0.9, 1.0};
  pack.i_charge.value = {-200.0, -200.0, -100.0, 0.0};
  pack.i_discharge.soc = {0.0, 0.1, 0.2, 1.0};
  pack.i_discharge.value = {0.0, 200.0, 400.0, 400.0};
  return pack;
}

powertrain::PlantConfig make_plant(Variant v) {
  powertrain::PlantConfig cfg;
  cfg.motor = make_motor_map();
  cfg.battery = make_battery();
  if (v == Variant::kThreeSpeed) {
    cfg.gears.ratios = {17.1, 23.6, 32.3};
    cfg.gears.efficiency = 0.83;
    cfg.vehicle.mass_kg = 1948.0;
  } else {
    cfg.gears.ratios = {23.6};
    cfg.gears.efficiency = 0.93;
    cfg.vehicle.mass_kg = 1848.0;
  }
  return cfg;
}

void apply_overrides(Bundle& b, const json& j) {
  if (j.contains("traffic")) {
    const auto& t = j["traffic"];
    auto& p = b.traffic;
    p.free_flow_speed = t.value("free_flow_speed", p.free_flow_speed);
    p.congestion_gradient = t.value("congestion_gradient", p.congestion_gradient);
    p.jam_density = t.value("jam_density", p.jam_density);
    p.relaxation_time = t.value("relaxation_time", p.relaxation_time);
    p.pressure_coeff = t.value("pressure_coeff", p.pressure_coeff);
    p.density_guard = t.value("density_guard", p.density_guard);
    p.cell_length = t.value("cell_length", p.cell_length);
    p.dt = t.value("dt", p.dt);
    p.n_cells = t.value("n_cells", p.n_cells);
  }
  if (j.contains("ukf")) {
    const auto& u = j["ukf"];
    auto& c = b.ukf;
    c.alpha = u.value("alpha", c.alpha);
    c.kappa = u.value("kappa", c.kappa);
    c.beta = u.value("beta", c.beta);
    c.noise.density_std = u.value("density_std", c.noise.density_std);
    c.noise.speed_std = u.value("speed_std", c.noise.speed_std);
    c.noise.measurement_std = u.value("measurement_std", c.noise.measurement_std);
    c.prior_density_std = u.value("prior_density_std", c.prior_density_std);
    c.prior_speed_std = u.value("prior_speed_std", c.prior_speed_std);
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    b.weights.w0 = w.value("w0", b.weights.w0);
    b.weights.w1 = w.value("w1", b.weights.w1);
    b.weights.w2 = w.value("w2", b.weights.w2);
    b.weights.w_max = w.value("w_max", b.weights.w_max);
    b.weights.w_min = w.value("w_min", b.weights.w_min);
    b.weights.beta = w.value("beta", b.weights.beta);
  }
  if (j.contains("limits")) {
    const auto& l = j["limits"];
    b.limits.time_budget_s = l.value("time_budget_s", b.limits.time_budget_s);
    b.limits.node_limit = l.value<long>("node_limit", b.limits.node_limit);
    b.limits.gap_tol = l.value("gap_tol", b.limits.gap_tol);
    b.limits.int_tol = l.value("int_tol", b.limits.int_tol);
    b.limits.work_limit = l.value<long>("work_limit", b.limits.work_limit);
  }
  if (j.contains("controller")) {
    const auto& c = j["controller"];
    b.controller.horizon_s = c.value("horizon_s", b.controller.horizon_s);
    b.controller.control_dt = c.value("control_dt", b.controller.control_dt);
    b.controller.replan_period_s = c.value("replan_period_s", b.controller.replan_period_s);
  }
  auto apply_vehicle = [&](powertrain::PlantConfig& plant, const json& v) {
    auto& p = plant.vehicle;
    p.mass_kg = v.value("mass_kg", p.mass_kg);
    p.rolling_coeff = v.value("rolling_coeff", p.rolling_coeff);
    p.drag_coeff = v.value("drag_coeff", p.drag_coeff);
    p.v_lim = v.value("v_lim", p.v_lim);
    p.a_min = v.value("a_min", p.a_min);
    p.a_max = v.value("a_max", p.a_max);
    p.j_min = v.value("j_min", p.j_min);
    p.j_max = v.value("j_max", p.j_max);
    p.h_min = v.value("h_min", p.h_min);
    p.d_min = v.value("d_min", p.d_min);
    p.d_max = v.value("d_max", p.d_max);
    p.v_lscp = v.value("v_lscp", p.v_lscp);
    p.a_reg = v.value("a_reg", p.a_reg);
    if (v.contains("gear_ratios")) {
      plant.gears.ratios = v["gear_ratios"].get<std::vector<double>>();
    }
    plant.gears.efficiency = v.value("gear_efficiency", plant.gears.efficiency);
    plant.battery.p_aux = v.value("p_aux", plant.battery.p_aux);
  };
  if (j.contains("three_speed")) apply_vehicle(b.three_speed, j["three_speed"]);
  if (j.contains("single_speed")) apply_vehicle(b.single_speed, j["single_speed"]);
}

}  // namespace

void ControllerConfig::validate() const {
  if (horizon_s <= 0 || control_dt <= 0 || replan_period_s <= 0) {
    throw std::invalid_argument("controller periods must be positive");
  }
  const double ratio = replan_period_s / control_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw std::invalid_argument("replan period must be a multiple of the control dt");
  }
  if (horizon_s < replan_period_s) {
    throw std::invalid_argument("horizon must cover at least one replan period");
  }
}

Bundle default_bundle() {
  Bundle b;
  b.three_speed = make_plant(Variant::kThreeSpeed);
  b.single_speed = make_plant(Variant::kSingleSpeed);
  b.limits.time_budget_s = 0.9;
  b.limits.node_limit = 5000;
  b.limits.gap_tol = 1e-3;
  b.limits.work_limit = 0;
  b.traffic.validate();
  b.controller.validate();
  b.three_speed.vehicle.validate();
  b.single_speed.vehicle.validate();
  b.three_speed.gears.validate();
  b.single_speed.gears.validate();
  b.three_speed.motor.validate();
  b.three_speed.battery.validate();
  return b;
}

Bundle load_bundle(const std::string& json_path) {
  Bundle b = default_bundle();
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open config file: " + json_path);
  json j;
  in >> j;
  apply_overrides(b, j);
  b.traffic.validate();
  b.controller.validate();
  b.three_speed.vehicle.validate();
  b.single_speed.vehicle.validate();
  return b;
}

}  // namespace ecodrive::config
