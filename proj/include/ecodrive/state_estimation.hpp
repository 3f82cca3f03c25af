#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "ecodrive/traffic_flow.hpp"

namespace ecodrive::estimation {

struct UkfConfig {
  double alpha = 0.1;   // sigma point spread
  double kappa = 0.0;
  double beta = 2.0;
  traffic::NoiseSpec noise;        // process stds (Q) and measurement std (R)
  double prior_density_std = 0.02; // P0 diagonal, density block
  double prior_speed_std = 3.0;    // P0 diagonal, speed block
  int jitter_retries = 3;
  double jitter = 1e-9;
};

/// Gaussian belief over the stacked [density; speed] grid state.
struct Belief {
  Eigen::VectorXd mean;  // size 2*n_cells, [rho_0..rho_{n-1}, v_0..v_{n-1}]
  Eigen::MatrixXd cov;

  int n_cells() const { return static_cast<int>(mean.size()) / 2; }
  traffic::TrafficGridState to_grid_state() const;
  static Belief from_grid_state(const traffic::TrafficGridState& s, const UkfConfig& cfg);
};

/// One connected-vehicle speed report.
struct CvMeasurement {
  int vehicle_id = 0;
  double position_m = 0.0;  // grid-local
  double speed_mps = 0.0;
  std::int64_t step = 0;
};

/// Predicted lead-vehicle motion over the horizon, on the traffic dt grid.
struct LeadPrediction {
  double dt = 0.1;
  std::vector<double> position_m;        // d_lead(t), non-decreasing
  std::vector<double> speed_mps;         // v_lead(t) >= 0
  std::vector<double> sigma_position_m;  // non-decreasing
  bool exited_grid = false;

  int steps() const { return static_cast<int>(position_m.size()); }
  double horizon_s() const { return (steps() - 1) * dt; }
  /// Linear interpolation at time t (s) from prediction start.
  double position_at(double t) const;
  double speed_at(double t) const;
  double sigma_at(double t) const;
};

/// Unscented propagation of the belief through an arbitrary process map,
/// with additive process covariance `q_diag` (empty = none).
Belief unscented_transform(const Belief& belief,
                           const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& process,
                           const Eigen::VectorXd& q_diag, const UkfConfig& cfg);

/// Unscented propagation of the belief through one traffic model step.
Belief ukf_predict(const Belief& belief, const traffic::SignalSchedule& signals,
                   std::int64_t k, const traffic::TrafficParams& params,
                   const UkfConfig& cfg);

/// Unscented measurement update with the cell-blend observation model.
/// Measurements outside the grid are rejected; their indices are appended to
/// `rejected` when provided. An empty list leaves the belief unchanged.
Belief ukf_update(const Belief& belief, const std::vector<CvMeasurement>& measurements,
                  const traffic::TrafficParams& params, const UkfConfig& cfg,
                  std::vector<int>* rejected = nullptr);

/// Deterministic forward rollout of the belief mean with the lead vehicle
/// advected by the interpolated traffic speed at its running position.
/// Position uncertainty accumulates the cell speed variance of the posterior.
LeadPrediction predict_lead(const Belief& belief, double lead_position_m,
                            double lead_speed_mps, const traffic::SignalSchedule& signals,
                            std::int64_t k0, double horizon_s,
                            const traffic::TrafficParams& params, const UkfConfig& cfg);

/// Shift the belief window downstream by `cells` cells. Vacated downstream
/// cells are filled with the given prior density/speed and prior variance.
Belief shift_window(const Belief& belief, int cells, double prior_density,
                    double prior_speed, const UkfConfig& cfg);

}  // namespace ecodrive::estimation
