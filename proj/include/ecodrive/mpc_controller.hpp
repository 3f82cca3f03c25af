#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecodrive/branch_and_bound.hpp"
#include "ecodrive/config.hpp"
#include "ecodrive/mip_formulation.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/scenario.hpp"
#include "ecodrive/state_estimation.hpp"

namespace ecodrive::mpc {

struct CyclePlan {
  mip::Trajectory traj;
  double d_z = 0.0;
  bool fallback = false;
  double solve_seconds = 0.0;
  double rel_gap = 0.0;
  long nodes = 0;
  long lp_iterations = 0;
  std::string solve_status;
};

/// Receding-horizon controller for one vehicle variant. Freezes the battery
/// linearization each cycle, builds and solves the mixed-integer program,
/// warm-starting from the previous plan shifted by the replan period.
class Controller {
 public:
  Controller(const config::Bundle& bundle, config::Variant variant);

  CyclePlan run_cycle(const powertrain::VehicleState& state,
                      const estimation::LeadPrediction& lead);

  const powertrain::PlantConfig& plant() const { return plant_; }
  const config::Bundle& bundle() const { return bundle_; }

 private:
  CyclePlan fallback_plan(const powertrain::VehicleState& state,
                          const estimation::LeadPrediction& lead) const;

  config::Bundle bundle_;
  config::Variant variant_;
  const powertrain::PlantConfig& plant_;
  std::optional<mip::Trajectory> prev_plan_;
  lp::Basis root_basis_;
  bool have_root_basis_ = false;
  bool first_cycle_ = true;
};

/// One plant-rate log record (control dt resolution).
struct StepRecord {
  double t_s = 0.0;
  double d_m = 0.0;
  double v_mps = 0.0;
  double a_mps2 = 0.0;
  int gear = 1;
  double tm_nm = 0.0;
  double fb_n = 0.0;
  double pb_w = 0.0;
  double soc = 0.0;
  double s_max_m = 0.0;
  double s_min_m = 0.0;
  double solve_ms = 0.0;
  double gap = 0.0;
};

struct EpisodeLog {
  std::vector<StepRecord> steps;
  bool completed = false;
  std::string failure;
  double distance_m = 0.0;
  double soc_start = 0.0, soc_end = 0.0;
  double projection_frac_max = 0.0;  // worst control projection, fraction of range
  double slack_min_max = 0.0;        // max s_min over the episode
  double slack_max_max = 0.0;
  int fallback_cycles = 0;
  std::vector<double> cycle_solve_ms;
  std::vector<double> cycle_gap;
  // Energy bookkeeping at plant resolution.
  double energy_pb_j = 0.0;          // integral of battery power
  double energy_loss_j = 0.0;        // integral of I^2 R losses
  double charge_as = 0.0;            // integral of current
  double energy_accel_j = 0.0, energy_cruise_j = 0.0, energy_regen_j = 0.0;
  int stop_count = 0;
};

struct EpisodeSetup {
  scenario::Scenario sc;
  std::uint64_t seed = 1;
  double ego_gap_behind = 20.0;  // spawn distance behind the platoon tail
  double soc_start = 0.7;
  bool measurement_noise = true;
};

/// Closed loop: traffic estimation + MPC every replan period, plant steps at
/// the control dt, CV measurements assimilated at the traffic dt.
EpisodeLog run_episode(const EpisodeSetup& setup, const config::Bundle& bundle,
                       config::Variant variant);

}  // namespace ecodrive::mpc
