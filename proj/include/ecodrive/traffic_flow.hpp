#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ecodrive::traffic {

/// Parameters of the discretized second-order macroscopic traffic model.
struct TrafficParams {
  double free_flow_speed = 15.0;   // v0, m/s
  double congestion_gradient = 3.0;  // c, m/s
  double jam_density = 0.15;       // veh/m
  double relaxation_time = 5.0;    // tau, s
  double pressure_coeff = 6.0;     // c0, m/s
  double density_guard = 1e-4;     // epsilon, veh/m
  double cell_length = 25.0;       // dx, m
  double dt = 0.1;                 // s
  int n_cells = 20;

  double critical_density() const {
    return jam_density / (free_flow_speed / congestion_gradient + 1.0);
  }
  void validate() const;
};

/// Per-cell density and speed of a road window.
struct TrafficGridState {
  std::vector<double> density;  // veh/m
  std::vector<double> speed;    // m/s

  int n_cells() const { return static_cast<int>(density.size()); }
};

/// Red phases of one signal, expressed in grid-cell / model-step coordinates.
struct SignalCell {
  int cell = 0;
  // Half-open [begin, end) step intervals during which the signal is red.
  std::vector<std::pair<std::int64_t, std::int64_t>> red_intervals;

  bool red_at(std::int64_t k) const {
    for (const auto& [b, e] : red_intervals) {
      if (k >= b && k < e) return true;
    }
    return false;
  }
};

struct SignalSchedule {
  std::vector<SignalCell> signals;
  void validate(int n_cells) const;
};

/// Standard deviations of the model and measurement noise terms.
struct NoiseSpec {
  double density_std = 1e-4;      // omega, veh/m
  double speed_std = 0.05;        // xi, m/s
  double measurement_std = 0.3;   // phi, m/s
};

/// Counters for state clamping applied during a step.
struct ClampStats {
  int density_clamps = 0;
  int speed_clamps = 0;
};

/// Equilibrium speed of the triangular fundamental diagram.
double equilibrium_speed(double density, const TrafficParams& params);

/// One forward step of the density/speed grid. Signals force the speed of
/// their cell to zero while red (applied after the update). Optional
/// additive Gaussian noise uses the supplied RNG. Outputs are clamped to
/// [0, jam_density] x [0, v0]; clamp counts are reported via `stats`.
TrafficGridState step(const TrafficGridState& state, const SignalSchedule& signals,
                      std::int64_t k, const TrafficParams& params,
                      const NoiseSpec* noise = nullptr, std::mt19937_64* rng = nullptr,
                      ClampStats* stats = nullptr);

/// Linear blend of the two cell speeds adjacent to `position_m` (grid-local
/// coordinates). Optional Gaussian measurement noise.
double measure_speed(const TrafficGridState& state, double position_m,
                     const TrafficParams& params, const NoiseSpec* noise = nullptr,
                     std::mt19937_64* rng = nullptr);

/// Total vehicle count of the window, sum(rho_j * dx).
double vehicle_count(const TrafficGridState& state, const TrafficParams& params);

/// Uniform state at density rho with speed Ve(rho) in every cell.
TrafficGridState uniform_equilibrium(double density, const TrafficParams& params);

}  // namespace ecodrive::traffic
