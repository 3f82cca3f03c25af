#pragma once

#include <vector>

#include "ecodrive/mip_formulation.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/state_estimation.hpp"

namespace ecodrive::dp {

/// Discretization of the dynamic-programming oracle. Speeds live on a
/// uniform grid; the acceleration quantization generates reachable
/// speed-to-speed transitions; positions fall on the exact lattice spanned
/// by dt * speed-grid sums, so no interpolation is needed there.
struct DpGrid {
  double speed_step = 0.2;   // m/s
  double accel_step = 1.0;   // m/s^2, action quantization
  double dt = 0.2;           // s
  int max_steps = 30;        // tractability guard (6 s at 0.2 s)
  bool enforce_jerk = false; // chain accel choices between steps
};

enum class DpStatus { kOptimal, kInfeasible };

struct DpResult {
  DpStatus status = DpStatus::kInfeasible;
  double objective = 0.0;
  mip::Trajectory trajectory;  // gear/torque/brake per step, soc via replay
  std::vector<double> soc;     // per node 0..n
  long states_expanded = 0;
};

/// Exact minimization of the discretized cycle objective over the
/// (time, speed, gear) grid with the hard car-following corridor (no
/// slacks). `use_polynomial` switches the stage power from the exact
/// efficiency map to the fitted bilinear surrogate.
DpResult dp_solve(const mip::CycleInput& input, const mip::Weights& weights,
                  const powertrain::PlantConfig& plant, const DpGrid& grid,
                  bool use_polynomial);

}  // namespace ecodrive::dp
