#include "ecodrive/traffic_flow.hpp"

#include <algorithm>
#include <cmath>

namespace ecodrive::traffic {

void TrafficParams::validate() const {
  if (free_flow_speed <= 0 || congestion_gradient <= 0 || jam_density <= 0 ||
      relaxation_time <= 0 || cell_length <= 0 || dt <= 0 || density_guard <= 0) {
    throw std::invalid_argument("traffic params must be positive");
  }
  if (n_cells < 2) throw std::invalid_argument("need at least 2 cells");
  if (free_flow_speed * dt >= cell_length) {
    throw std::invalid_argument("CFL violation: v0*dt must stay below dx");
  }
}

void SignalSchedule::validate(int n_cells) const {
  for (const auto& s : signals) {
    if (s.cell < 0 || s.cell >= n_cells) throw std::invalid_argument("signal cell outside grid");
    for (const auto& [b, e] : s.red_intervals) {
      if (e < b) throw std::invalid_argument("malformed red interval");
    }
  }
}

double equilibrium_speed(double density, const TrafficParams& params) {
  if (density < 0.0 || density > params.jam_density) {
    throw std::domain_error("density outside [0, jam_density]");
  }
  const double rho_c = params.critical_density();
  if (density < rho_c) return params.free_flow_speed;
  return params.congestion_gradient * (params.jam_density / density - 1.0);
}

TrafficGridState step(const TrafficGridState& state, const SignalSchedule& signals,
                      std::int64_t k, const TrafficParams& params, const NoiseSpec* noise,
                      std::mt19937_64* rng, ClampStats* stats) {
  const int n = state.n_cells();
  const double dt_dx = params.dt / params.cell_length;
  const double c0_sq = params.pressure_coeff * params.pressure_coeff;

  TrafficGridState next;
  next.density.resize(n);
  next.speed.resize(n);

  // Ghost cells replicate the nearest interior cell (zero-gradient boundary).
  auto rho_at = [&](int j) { return state.density[std::clamp(j, 0, n - 1)]; };
  auto v_at = [&](int j) { return state.speed[std::clamp(j, 0, n - 1)]; };

  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int j = 0; j < n; ++j) {
    const double rho = state.density[j];
    const double v = state.speed[j];

    double rho_next =
        rho - dt_dx * (rho * v - rho_at(j - 1) * v_at(j - 1));
    double v_next = v - dt_dx * v * (v - v_at(j - 1)) +
                    params.dt * (equilibrium_speed(std::clamp(rho, 0.0, params.jam_density), params) - v) /
                        params.relaxation_time -
                    dt_dx * c0_sq * (rho_at(j + 1) - rho) / (rho + params.density_guard);

    if (noise != nullptr && rng != nullptr) {
      rho_next += noise->density_std * gauss(*rng);
      v_next += noise->speed_std * gauss(*rng);
    }

    if (rho_next < 0.0 || rho_next > params.jam_density) {
      rho_next = std::clamp(rho_next, 0.0, params.jam_density);
      if (stats != nullptr) ++stats->density_clamps;
    }
    if (v_next < 0.0 || v_next > params.free_flow_speed) {
      v_next = std::clamp(v_next, 0.0, params.free_flow_speed);
      if (stats != nullptr) ++stats->speed_clamps;
    }
    next.density[j] = rho_next;
    next.speed[j] = v_next;
  }

  for (const auto& sig : signals.signals) {
    if (sig.red_at(k)) next.speed[sig.cell] = 0.0;
  }
  return next;
}

double measure_speed(const TrafficGridState& state, double position_m,
                     const TrafficParams& params, const NoiseSpec* noise,
                     std::mt19937_64* rng) {
  const int n = state.n_cells();
  if (position_m < 0.0 || position_m >= (n - 1) * params.cell_length) {
    throw std::domain_error("measurement position outside grid");
  }
  const int j = static_cast<int>(position_m / params.cell_length);
  const double alpha = position_m / params.cell_length - j;
  double y = (1.0 - alpha) * state.speed[j] + alpha * state.speed[j + 1];
  if (noise != nullptr && rng != nullptr) {
    std::normal_distribution<double> gauss(0.0, noise->measurement_std);
    y += gauss(*rng);
  }
  return y;
}

double vehicle_count(const TrafficGridState& state, const TrafficParams& params) {
  double total = 0.0;
  for (double rho : state.density) total += rho * params.cell_length;
  return total;
}

TrafficGridState uniform_equilibrium(double density, const TrafficParams& params) {
  TrafficGridState s;
  s.density.assign(params.n_cells, density);
  s.speed.assign(params.n_cells, equilibrium_speed(density, params));
  return s;
}

}  // namespace ecodrive::traffic
