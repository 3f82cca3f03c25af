#pragma once

#include <string>

#include "ecodrive/branch_and_bound.hpp"
#include "ecodrive/mip_formulation.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/state_estimation.hpp"
#include "ecodrive/traffic_flow.hpp"

namespace ecodrive::config {

enum class Variant { kThreeSpeed, kSingleSpeed };

struct ControllerConfig {
  double horizon_s = 10.0;
  double control_dt = 0.2;
  double replan_period_s = 1.0;

  int n_steps() const { return static_cast<int>(horizon_s / control_dt + 0.5); }
  int applied_steps() const { return static_cast<int>(replan_period_s / control_dt + 0.5); }
  void validate() const;
};

/// Full parameter bundle for one run: traffic model, estimator, both
/// transmission variants, optimizer weights and limits.
struct Bundle {
  traffic::TrafficParams traffic;
  estimation::UkfConfig ukf;
  powertrain::PlantConfig three_speed;
  powertrain::PlantConfig single_speed;
  mip::Weights weights;
  mip::MipParams mip;
  solver::SolverLimits limits;
  ControllerConfig controller;

  const powertrain::PlantConfig& plant(Variant v) const {
    return v == Variant::kThreeSpeed ? three_speed : single_speed;
  }
};

/// The bundled synthetic parameter set. The motor map, battery tables and
/// traffic constants are plausible but invented; everything derived from them
/// (fitted power coefficients, current limits) is recomputed here.
Bundle default_bundle();

/// default_bundle() with selective overrides from a JSON file.
Bundle load_bundle(const std::string& json_path);

}  // namespace ecodrive::config
