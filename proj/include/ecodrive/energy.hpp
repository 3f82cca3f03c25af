#pragma once

#include <string>

#include "ecodrive/config.hpp"
#include "ecodrive/mpc_controller.hpp"
#include "ecodrive/scenario.hpp"

namespace ecodrive::energy {

struct EnergyReport {
  bool completed = false;
  std::string failure;
  double soc_consumed = 0.0;
  double wh_per_km = 0.0;       // integral of battery power / distance
  double wh_per_km_soc = 0.0;   // open-circuit energy minus ohmic losses / distance
  double distance_m = 0.0;
  int stops = 0;
  double wh_accel = 0.0, wh_cruise = 0.0, wh_regen = 0.0;
  double solve_ms_median = 0.0, solve_ms_max = 0.0;
  double gap_median = 0.0;
  int fallback_cycles = 0;
  double slack_min_max = 0.0, slack_max_max = 0.0;
  double projection_frac_max = 0.0;
};

struct ComparisonReport {
  EnergyReport three_speed;
  EnergyReport single_speed;
  double savings_pct = 0.0;  // (single - three) / single * 100, Wh/km basis
  bool valid = false;
};

EnergyReport make_report(const mpc::EpisodeLog& log, const powertrain::PlantConfig& plant,
                         double soc_start);

/// Runs both transmission variants on identical traffic inputs and seed.
ComparisonReport run_comparison(const mpc::EpisodeSetup& setup, const config::Bundle& bundle);

std::string report_to_json(const EnergyReport& rep);
std::string comparison_to_json(const ComparisonReport& rep);

/// Episode log in the documented CSV schema.
std::string episode_csv(const mpc::EpisodeLog& log);

}  // namespace ecodrive::energy
