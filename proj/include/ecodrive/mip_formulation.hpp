#pragma once

#include <vector>

#include "ecodrive/powertrain.hpp"
#include "ecodrive/problem_spec.hpp"
#include "ecodrive/state_estimation.hpp"

namespace ecodrive::mip {

struct Weights {
  double w0 = 1.0;     // terminal deviation
  double w1 = 1e-4;    // energy
  double w2 = 0.5;     // comfort
  double w_max = 1e3;  // lag-side slack
  double w_min = 1e3;  // safety-side slack
  double beta = 1.0;   // confidence multiplier on prediction sigma

  void validate() const;
};

struct MipParams {
  int n_speed_bp = 33;      // d_v breakpoints over [0, v_lim]
  int n_lscp_bp = 33;       // d_l breakpoints over [0, v_lim]
  int n_accel_bp = 31;      // comfort PWL over [a_min, a_max]
  int n_slack_bp = 21;      // slack PWL over [0, slack_pwl_range]
  int n_terminal_bp = 41;   // terminal PWL over +-terminal_pwl_range
  double slack_pwl_range = 50.0;
  double terminal_pwl_range = 200.0;
  double torque_box = 250.0;       // optimizer torque bounds (+-), N m
  double motor_power_cap = 110e3;  // cap on the w_m*T_m product, W
  double resist_min = -9000.0;     // F_r box, N
  double resist_max = 20000.0;
};

/// Inputs frozen at the start of one optimization cycle.
struct CycleInput {
  powertrain::VehicleState state;
  estimation::LeadPrediction lead;
  double pack_voc_frozen = 0.0;  // n_s * Voc(SOC0), V
  double pack_rb_frozen = 0.0;   // (n_s/n_p) * R_b(SOC0), ohm
  double pb_min = -1e9;          // battery power window at SOC0, W
  double pb_max = 1e9;
  int n_steps = 50;
  double dt = 0.2;
};

/// Variable index registry of a built problem.
struct VarIndex {
  int n = 0;
  int d_g = 0;
  std::vector<int> v, d;                 // 0..n
  std::vector<int> a;                    // 0..n-1
  std::vector<int> tm, wm, fb, fr, pm, pb;  // 0..n-1
  std::vector<std::vector<int>> gear;    // [k][i], k = 0..n-1
  std::vector<int> s_max, s_min;         // k = 1..n stored at k-1
  std::vector<std::vector<int>> lam;     // [k-1] for k = 1..n-1
  std::vector<std::vector<int>> tau;     // [k-1] for k = 1..n-1
};

struct BuiltProblem {
  ProblemSpec spec;
  VarIndex idx;
  double d_z = 0.0;
  double f_phi = 0.0;  // frozen road load, N
  std::vector<double> lead_pos, lead_sigma;  // on the control grid, 0..n
};

/// One solved (or candidate) control trajectory on the cycle grid.
struct Trajectory {
  std::vector<double> v, d;                  // size n+1
  std::vector<double> a, tm, wm, fb, pm, pb; // size n
  std::vector<int> gear;                     // size n, 1-based
  std::vector<double> s_max, s_min;          // size n, for k = 1..n

  int n_steps() const { return static_cast<int>(a.size()); }
};

/// Bounds used by the gear big-M encoding.
struct GearBigMBounds {
  double v_max = 32.0;
  double w_m_ub = 1100.0;
  double f_r_min = -9000.0;
  double f_r_max = 20000.0;
  double t_m_max = 250.0;
};

// --- encoding building blocks (one MPC step each) -------------------------

/// Big-M linking of w_m = r_g v and F_r = T_m r_g under one-hot gears.
/// `v_var` < 0 means v is the fixed constant `v_fixed`.
void encode_gear_bigM(ProblemSpec& spec, const std::string& tag, int v_var, double v_fixed,
                      int wm_var, int tm_var, int fr_var, const std::vector<int>& gear_vars,
                      const std::vector<double>& ratios, const GearBigMBounds& bounds);

/// SOS2 weights over `breakpoints` tied to v_var; returns the weight ids.
/// The squared-speed surrogate is the linear form sum(lambda_i * b_i^2).
std::vector<int> encode_sos2_square(ProblemSpec& spec, const std::string& tag, int v_var,
                                    const std::vector<double>& breakpoints);

/// Four McCormick envelope rows for pm = wm * tm over the given box.
void encode_mccormick(ProblemSpec& spec, const std::string& tag, int pm_var, int wm_var,
                      int tm_var, double w_lo, double w_hi, double t_lo, double t_hi);

/// Low-speed-cutoff bound via a second SOS2 set: tm >= sum(tau_i * g(b_i))
/// with g = 0 at or below the cutoff and `floor_value` above it.
std::vector<int> encode_lscp(ProblemSpec& spec, const std::string& tag, int v_var, int tm_var,
                             const std::vector<double>& breakpoints, double v_lscp,
                             double floor_value);

/// Per-gear regenerative torque floor tm r_i + (1-g_i) t_max r_i >= m a_reg.
void encode_regen_bigM(ProblemSpec& spec, const std::string& tag, int tm_var,
                       const std::vector<int>& gear_vars, const std::vector<double>& ratios,
                       double t_m_max, double m_a_reg);

struct SoftCorridor {
  int s_max = -1;
  int s_min = -1;
};

/// Soft car-following corridor for one step; returns the slack variables.
/// Slack penalties are piecewise-linearized quadratics with a linear tail.
SoftCorridor soften_car_following(ProblemSpec& spec, const std::string& tag, int d_var,
                                  int v_var, double lead_pos, double sigma,
                                  const Weights& weights,
                                  const powertrain::VehicleParams& vp, const MipParams& mp);

/// Convex piecewise-linear penalty on `var` over `bps` with values `fs`,
/// extended linearly beyond both ends when the variable range exceeds the
/// breakpoints. Returns the weight variable ids.
std::vector<int> pwl_penalty(ProblemSpec& spec, const std::string& tag, int var,
                             const std::vector<double>& bps, const std::vector<double>& fs,
                             double scale);

// --- whole-cycle assembly ---------------------------------------------------

BuiltProblem build_problem(const CycleInput& input, const Weights& weights,
                           const powertrain::PlantConfig& plant, const MipParams& mp);

/// Pull the trajectory out of a structural solution vector.
Trajectory extract_trajectory(const BuiltProblem& built, const std::vector<double>& x);

/// Build a full structural assignment from a trajectory (for warm starts).
std::vector<double> complete_assignment(const BuiltProblem& built, const Trajectory& traj,
                                        const powertrain::PlantConfig& plant,
                                        const MipParams& mp);

/// Discretized cycle objective of a trajectory with the drive power
/// recomputed from the true product w_m * T_m (no envelope surrogate).
/// With `exact_map`, the efficiency-map power replaces the polynomial.
double evaluate_objective(const Trajectory& traj, double d_z, const Weights& weights, double dt,
                          const powertrain::PlantConfig& plant, bool exact_map,
                          bool include_slack_penalty = true);

/// Rounding repair used as the branch-and-bound primal heuristic: keeps the
/// relaxation's kinematics (v, a, d are LP-feasible), picks one gear per step
/// and re-solves the torque/brake split against the encoded bounds. Returns
/// false when some step admits no feasible gear.
bool round_and_repair(const BuiltProblem& built, const std::vector<double>& lp_x,
                      const powertrain::PlantConfig& plant, const MipParams& mp,
                      std::vector<double>* candidate);

/// Recompute tm/fb/wm/pm/pb of `traj` from its kinematics against the
/// encoded (optimizer-level) bounds. With `keep_gear`, the trajectory's gear
/// is kept wherever feasible; otherwise the lowest-battery-power gear wins.
bool assign_powertrain_controls(const BuiltProblem& built, const powertrain::PlantConfig& plant,
                                const MipParams& mp, bool keep_gear, Trajectory* traj);

/// Evenly spaced speed breakpoints [0, v_lim] (first = 0, last = v_lim).
std::vector<double> speed_breakpoints(int count, double v_lim);

}  // namespace ecodrive::mip
