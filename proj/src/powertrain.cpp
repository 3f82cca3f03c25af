#include "ecodrive/powertrain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace ecodrive::powertrain {

namespace {

double lerp_table(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (xs.empty()) throw std::logic_error("empty lookup table");
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const size_t i = static_cast<size_t>(it - xs.begin()) - 1;
  const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
  return (1.0 - t) * ys[i] + t * ys[i + 1];
}

}  // namespace

double SlopeProfile::at(double d) const {
  if (knots.empty()) return 0.0;
  std::vector<double> xs, ys;
  xs.reserve(knots.size());
  ys.reserve(knots.size());
  for (const auto& [x, y] : knots) {
    xs.push_back(x);
    ys.push_back(y);
  }
  return lerp_table(xs, ys, d);
}

void VehicleParams::validate() const {
  if (mass_kg <= 0) throw std::invalid_argument("mass must be positive");
  if (!(a_min < 0 && 0 < a_max)) throw std::invalid_argument("need a_min < 0 < a_max");
  if (!(j_min < 0 && 0 < j_max)) throw std::invalid_argument("need j_min < 0 < j_max");
  if (!(d_min < d_max)) throw std::invalid_argument("need d_min < d_max");
  if (a_reg >= 0) throw std::invalid_argument("a_reg must be negative");
}

double VehicleParams::road_load(double d) const {
  const double phi = slope.at(d);
  return mass_kg * gravity * (std::sin(phi) + rolling_coeff * std::cos(phi));
}

double VehicleParams::road_load_max() const {
  const double phi = design_max_slope_rad;
  return mass_kg * gravity * (std::sin(phi) + rolling_coeff * std::cos(phi));
}

double GearSet::ratio_min() const { return *std::min_element(ratios.begin(), ratios.end()); }
double GearSet::ratio_max() const { return *std::max_element(ratios.begin(), ratios.end()); }

void GearSet::validate() const {
  if (ratios.empty()) throw std::invalid_argument("gear set needs at least one ratio");
  if (efficiency <= 0.0 || efficiency > 1.0) throw std::invalid_argument("bad gear efficiency");
  for (double r : ratios) {
    if (r <= 0.0) throw std::invalid_argument("gear ratios must be positive");
  }
  const bool inc = std::is_sorted(ratios.begin(), ratios.end());
  const bool dec = std::is_sorted(ratios.rbegin(), ratios.rend());
  if (!inc && !dec) throw std::invalid_argument("gear ratios must be monotone");
}

double MotorMap::efficiency_at(double w_m, double torque) const {
  const auto& ws = speed_grid;
  const auto& ts = torque_grid;
  const double w = std::clamp(w_m, ws.front(), ws.back());
  const double t = std::clamp(torque, ts.front(), ts.back());
  auto wi = std::upper_bound(ws.begin(), ws.end(), w);
  size_t i = std::min(ws.size() - 2, static_cast<size_t>(std::max<long>(0, wi - ws.begin() - 1)));
  auto ti = std::upper_bound(ts.begin(), ts.end(), t);
  size_t j = std::min(ts.size() - 2, static_cast<size_t>(std::max<long>(0, ti - ts.begin() - 1)));
  const double fw = (w - ws[i]) / (ws[i + 1] - ws[i]);
  const double ft = (t - ts[j]) / (ts[j + 1] - ts[j]);
  const size_t nt = ts.size();
  const double e00 = efficiency[i * nt + j];
  const double e01 = efficiency[i * nt + j + 1];
  const double e10 = efficiency[(i + 1) * nt + j];
  const double e11 = efficiency[(i + 1) * nt + j + 1];
  return (1.0 - fw) * ((1.0 - ft) * e00 + ft * e01) + fw * ((1.0 - ft) * e10 + ft * e11);
}

double MotorMap::torque_max_at(double w_m) const {
  return lerp_table(speed_grid, torque_max_curve, std::clamp(w_m, speed_min, speed_max));
}

bool MotorMap::in_envelope(double torque, double w_m) const {
  if (w_m < speed_min - 1e-9 || w_m > speed_max + 1e-9) return false;
  const double t_max = torque_max_at(w_m);
  return torque >= -t_max - 1e-9 && torque <= t_max + 1e-9;
}

void MotorMap::validate() const {
  if (speed_grid.size() < 2 || torque_grid.size() < 2) {
    throw std::invalid_argument("motor map grid too small");
  }
  if (efficiency.size() != speed_grid.size() * torque_grid.size()) {
    throw std::invalid_argument("efficiency grid size mismatch");
  }
  if (torque_max_curve.size() != speed_grid.size()) {
    throw std::invalid_argument("torque curve size mismatch");
  }
  for (double e : efficiency) {
    if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("efficiency outside (0,1]");
  }
  if (!std::isfinite(p00) || !std::isfinite(p10) || !std::isfinite(p01) || !std::isfinite(p11)) {
    throw std::invalid_argument("fitted coefficients must be finite");
  }
}

double SocTable::at(double s) const { return lerp_table(soc, value, s); }

void BatteryPack::validate() const {
  if (capacity_As <= 0 || n_series <= 0 || n_parallel <= 0) {
    throw std::invalid_argument("bad battery pack layout");
  }
  for (double s = 0.0; s <= 1.0; s += 0.05) {
    if (voc.at(s) <= 0.0) throw std::invalid_argument("Voc must be positive");
    if (resistance.at(s) <= 0.0) throw std::invalid_argument("R_b must be positive");
    if (i_charge.at(s) > 1e-12) throw std::invalid_argument("I_chg must be <= 0");
    if (i_discharge.at(s) < -1e-12) throw std::invalid_argument("I_dis must be >= 0");
  }
}

double BatteryPack::max_deliverable_power(double soc) const {
  const double v = voc.at(soc);
  const double r = resistance.at(soc);
  return n_series * n_parallel * v * v / (4.0 * r);
}

double drive_power_exact(double torque, double w_m, const MotorMap& map) {
  if (!map.in_envelope(torque, w_m)) {
    throw std::domain_error("operating point outside motor envelope");
  }
  const double eta = map.efficiency_at(w_m, torque);
  if (torque >= 0.0) return w_m * torque / eta;
  return eta * w_m * torque;
}

double drive_power_fitted(double torque, double w_m, const MotorMap& map) {
  return map.p00 + map.p10 * w_m + map.p01 * torque + map.p11 * w_m * torque;
}

double battery_power(double i_b, double soc, const BatteryPack& pack) {
  const double v = pack.voc.at(soc);
  const double r = pack.resistance.at(soc);
  return pack.n_series * v * i_b - i_b * i_b * (static_cast<double>(pack.n_series) / pack.n_parallel) * r;
}

double current_from_power(double p_b, double soc, const BatteryPack& pack) {
  const double v = pack.n_series * pack.voc.at(soc);
  const double a = (static_cast<double>(pack.n_series) / pack.n_parallel) * pack.resistance.at(soc);
  const double disc = v * v - 4.0 * a * p_b;
  if (disc < 0.0) throw std::runtime_error("requested battery power is infeasible");
  return (v - std::sqrt(disc)) / (2.0 * a);
}

VehicleState simulate_step(const VehicleState& state, const Controls& controls, double dt,
                           const PlantConfig& cfg, StepInfo* info) {
  if (controls.gear < 1 || controls.gear > cfg.gears.gear_count()) {
    throw std::invalid_argument("gear index out of range");
  }
  if (controls.brake_force < 0.0 || controls.brake_force > cfg.vehicle.brake_force_max + 1e-9) {
    throw std::invalid_argument("brake force out of range");
  }
  const double r = cfg.gears.ratios[controls.gear - 1];
  const double w_m = r * state.speed_mps;
  if (!cfg.motor.in_envelope(controls.motor_torque, w_m)) {
    throw std::invalid_argument("motor torque outside envelope");
  }

  const double f_road = cfg.vehicle.road_load(state.position_m);
  const double drag = cfg.vehicle.drag_coeff * state.speed_mps * state.speed_mps;
  const double accel =
      (controls.motor_torque * r - controls.brake_force - f_road - drag) / cfg.vehicle.mass_kg;

  const double p_drv = drive_power_exact(controls.motor_torque, w_m, cfg.motor);
  const double p_b = cfg.battery.p_aux + p_drv / cfg.gears.efficiency;

  const double p_lo = battery_power(cfg.battery.i_charge.at(state.soc), state.soc, cfg.battery);
  const double p_hi = battery_power(cfg.battery.i_discharge.at(state.soc), state.soc, cfg.battery);
  if (p_b < p_lo - 1e-6 || p_b > p_hi + 1e-6) {
    throw std::runtime_error("battery power outside current-limit window");
  }
  const double i_b = current_from_power(p_b, state.soc, cfg.battery);

  VehicleState next = state;
  next.position_m = state.position_m + state.speed_mps * dt;
  next.speed_mps = std::max(0.0, state.speed_mps + accel * dt);
  next.soc = state.soc - i_b * dt / cfg.battery.capacity_As;
  next.gear = controls.gear;
  next.prev_accel = accel;

  bool clamped = false;
  if (next.soc < 0.0 || next.soc > 1.0) {
    next.soc = std::clamp(next.soc, 0.0, 1.0);
    clamped = true;
  }

  if (info != nullptr) {
    info->accel = accel;
    info->motor_speed = w_m;
    info->drive_power = p_drv;
    info->battery_power = p_b;
    info->current = i_b;
    info->soc_clamped = clamped;
  }
  return next;
}

GearDesignReport check_gear_design(const GearSet& gears, const PlantConfig& cfg) {
  GearDesignReport rep;
  const double t_max = *std::max_element(cfg.motor.torque_max_curve.begin(),
                                         cfg.motor.torque_max_curve.end());
  rep.uphill_margin =
      t_max * gears.ratio_max() * gears.efficiency - cfg.vehicle.road_load_max();
  rep.top_speed_margin = cfg.motor.speed_max / gears.ratio_min() - cfg.vehicle.design_top_speed;
  rep.pass = rep.uphill_margin >= 0.0 && rep.top_speed_margin >= 0.0;
  return rep;
}

PolynomialFit fit_drive_power_polynomial(const MotorMap& map) {
  std::vector<Eigen::Vector4d> rows;
  std::vector<double> targets;
  for (double w : map.speed_grid) {
    const double t_max = map.torque_max_at(w);
    for (double t : map.torque_grid) {
      if (std::abs(t) > t_max + 1e-9) continue;
      rows.push_back({1.0, w, t, w * t});
      targets.push_back(drive_power_exact(t, w, map));
    }
  }
  Eigen::MatrixXd a(rows.size(), 4);
  Eigen::VectorXd b(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    a.row(i) = rows[i].transpose();
    b[i] = targets[i];
  }
  Eigen::Vector4d coef = (a.transpose() * a).ldlt().solve(a.transpose() * b);

  const Eigen::VectorXd resid = b - a * coef;
  const double ss_res = resid.squaredNorm();
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).matrix().squaredNorm();

  std::vector<double> pct;
  pct.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (std::abs(b[i]) > 1.0) pct.push_back(std::abs(resid[i] / b[i]) * 100.0);
  }
  std::sort(pct.begin(), pct.end());

  PolynomialFit fit;
  fit.p00 = coef[0];
  fit.p10 = coef[1];
  fit.p01 = coef[2];
  fit.p11 = coef[3];
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.median_abs_pct_err = pct.empty() ? 0.0 : pct[pct.size() / 2];
  return fit;
}

}  // namespace ecodrive::powertrain
