#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ecodrive::powertrain {

/// Piecewise-linear slope profile phi(d) in radians; empty means flat road.
struct SlopeProfile {
  std::vector<std::pair<double, double>> knots;  // (position_m, angle_rad)

  double at(double d) const;
};

struct VehicleParams {
  double mass_kg = 1948.0;
  double gravity = 9.81;
  double rolling_coeff = 0.009;     // mu
  double drag_coeff = 0.42;         // C_wind, N s^2/m^2
  SlopeProfile slope;
  double v_lim = 32.0;              // m/s
  double a_min = -4.0, a_max = 3.0; // m/s^2
  double j_min = -3.0, j_max = 3.0; // m/s^3
  double h_min = 1.5;               // s
  double d_min = 5.0, d_max = 40.0; // m
  double v_lscp = 10.0 / 3.6;       // low-speed cutoff, m/s
  double a_reg = -0.2 * 9.81;       // max regen deceleration, m/s^2
  double brake_force_max = 12000.0; // N
  // Design targets for the gear-ratio audit.
  double design_max_slope_rad = 0.25;
  double design_top_speed = 32.0;

  void validate() const;
  /// Rolling + grade resistance at position d.
  double road_load(double d) const;
  /// Worst-case road load at the design slope.
  double road_load_max() const;
};

struct GearSet {
  std::vector<double> ratios;   // lumped ratio per gear, 1/m
  double efficiency = 0.83;     // eta_gear

  int gear_count() const { return static_cast<int>(ratios.size()); }
  double ratio_min() const;
  double ratio_max() const;
  void validate() const;
};

/// Motor efficiency map on a (speed, torque) grid with torque-limit curve
/// samples and the offline-fitted drive power coefficients.
struct MotorMap {
  std::vector<double> speed_grid;       // rad/s, increasing, >= 0
  std::vector<double> torque_grid;      // N m, increasing, symmetric range
  std::vector<double> efficiency;       // row-major [speed][torque], (0,1]
  std::vector<double> torque_max_curve; // N m, aligned with speed_grid
  double speed_min = 0.0, speed_max = 1100.0;
  double p00 = 0.0, p10 = 0.0, p01 = 0.0, p11 = 0.0;

  double efficiency_at(double w_m, double torque) const;  // bilinear
  double torque_max_at(double w_m) const;                 // linear interp
  bool in_envelope(double torque, double w_m) const;
  void validate() const;
};

/// SOC-indexed lookup table with linear interpolation.
struct SocTable {
  std::vector<double> soc;    // increasing, within [0,1]
  std::vector<double> value;

  double at(double s) const;
};

struct BatteryPack {
  double capacity_As = 518400.0;  // Q_b, pack ampere-seconds
  int n_series = 96;
  int n_parallel = 4;
  SocTable voc;        // per-cell open-circuit voltage, V
  SocTable resistance; // per-cell internal resistance, ohm
  SocTable i_charge;   // pack charge current limit (<= 0), A
  SocTable i_discharge;// pack discharge current limit (>= 0), A
  double p_aux = 500.0;  // W

  void validate() const;
  /// Largest power the pack can source at this SOC, W.
  double max_deliverable_power(double soc) const;
};

struct VehicleState {
  double position_m = 0.0;
  double speed_mps = 0.0;
  double soc = 0.7;
  int gear = 1;            // 1-based
  double prev_accel = 0.0; // for jerk anchoring
};

struct Controls {
  double motor_torque = 0.0;  // N m
  double brake_force = 0.0;   // N, >= 0
  int gear = 1;               // 1-based
};

struct PlantConfig {
  VehicleParams vehicle;
  GearSet gears;
  MotorMap motor;
  BatteryPack battery;
};

struct StepInfo {
  double accel = 0.0;
  double motor_speed = 0.0;
  double drive_power = 0.0;   // W, at the motor
  double battery_power = 0.0; // W, at the pack terminals
  double current = 0.0;       // A
  bool soc_clamped = false;
};

/// Exact piecewise drive power from the efficiency map.
double drive_power_exact(double torque, double w_m, const MotorMap& map);

/// Offline-fitted bilinear drive power surrogate.
double drive_power_fitted(double torque, double w_m, const MotorMap& map);

/// Battery terminal power for pack current i_b at the given SOC.
double battery_power(double i_b, double soc, const BatteryPack& pack);

/// Physical-branch inversion of battery_power. Throws if p_b exceeds the
/// deliverable maximum at this SOC.
double current_from_power(double p_b, double soc, const BatteryPack& pack);

/// One Euler step of the longitudinal + SOC dynamics.
VehicleState simulate_step(const VehicleState& state, const Controls& controls, double dt,
                           const PlantConfig& cfg, StepInfo* info = nullptr);

struct GearDesignReport {
  double uphill_margin = 0.0;    // N
  double top_speed_margin = 0.0; // m/s
  bool pass = false;
};

/// Checks gradeability of the largest ratio and top speed of the smallest.
GearDesignReport check_gear_design(const GearSet& gears, const PlantConfig& cfg);

struct PolynomialFit {
  double p00 = 0.0, p10 = 0.0, p01 = 0.0, p11 = 0.0;
  double r_squared = 0.0;
  double median_abs_pct_err = 0.0;
};

/// Least-squares refit of the bilinear drive power surrogate over the map
/// grid (envelope-interior points only).
PolynomialFit fit_drive_power_polynomial(const MotorMap& map);

}  // namespace ecodrive::powertrain
