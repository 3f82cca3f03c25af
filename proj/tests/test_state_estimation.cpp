#include "ecodrive/state_estimation.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "doctest.h"

using namespace ecodrive;
using namespace ecodrive::estimation;

namespace {

traffic::TrafficParams params() { return {}; }

UkfConfig quiet_config() {
  UkfConfig cfg;
  cfg.noise.density_std = 0.0;
  cfg.noise.speed_std = 0.0;
  cfg.noise.measurement_std = 0.3;
  return cfg;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("point belief propagates exactly through the model") {
  const auto p = params();
  auto cfg = quiet_config();
  auto state = traffic::uniform_equilibrium(0.04, p);
  state.density[5] = 0.08;
  Belief b;
  b.mean = Belief::from_grid_state(state, cfg).mean;
  b.cov = Eigen::MatrixXd::Zero(b.mean.size(), b.mean.size());

  auto out = ukf_predict(b, {}, 0, p, cfg);
  const auto expect = traffic::step(state, {}, 0, p);
  const auto grid = out.to_grid_state();
  for (int j = 0; j < p.n_cells; ++j) {
    CHECK(grid.density[j] == doctest::Approx(expect.density[j]).epsilon(1e-12));
    CHECK(grid.speed[j] == doctest::Approx(expect.speed[j]).epsilon(1e-12));
  }
}

TEST_CASE("unscented transform matches the Kalman closed form on identity dynamics") {
  UkfConfig cfg = quiet_config();
  const int n = 6;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Belief b;
  b.mean = Eigen::VectorXd::NullaryExpr(n, [&](int) { return g(rng); });
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(n, n, [&](int, int) { return g(rng); });
  b.cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);

  Eigen::VectorXd q = Eigen::VectorXd::Constant(n, 0.05);
  auto out = unscented_transform(
      b, [](const Eigen::VectorXd& x) { return x; }, q, cfg);

  // Closed-form Kalman prediction under identity dynamics: mean unchanged,
  // covariance P + Q.
  CHECK((out.mean - b.mean).norm() < 1e-8);
  Eigen::MatrixXd expect = b.cov + Eigen::MatrixXd(q.asDiagonal());
  CHECK((out.cov - expect).norm() < 1e-8);
}

TEST_CASE("measurement update matches the Kalman closed form") {
  const auto p = params();
  UkfConfig cfg = quiet_config();
  auto state = traffic::uniform_equilibrium(0.05, p);
  Belief b = Belief::from_grid_state(state, cfg);

  std::vector<CvMeasurement> ms = {{0, 2.4 * p.cell_length, 9.0, 0},
                                   {1, 7.7 * p.cell_length, 11.0, 0}};
  auto post = ukf_update(b, ms, p, cfg);

  // The observation model is linear: y_i = (1-a) v_j + a v_{j+1}.
  const int n = p.n_cells;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2 * n);
  h(0, n + 2) = 0.6;
  h(0, n + 3) = 0.4;
  h(1, n + 7) = 0.3;
  h(1, n + 8) = 0.7;
  const double rr = cfg.noise.measurement_std * cfg.noise.measurement_std;
  Eigen::MatrixXd s = h * b.cov * h.transpose() + rr * Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd gain = b.cov * h.transpose() * s.inverse();
  Eigen::VectorXd y(2);
  y << 9.0, 11.0;
  Eigen::VectorXd mean_kf = b.mean + gain * (y - h * b.mean);
  Eigen::MatrixXd cov_kf = b.cov - gain * s * gain.transpose();

  CHECK((post.mean - mean_kf).norm() < 1e-8);
  CHECK((post.cov - cov_kf).norm() < 1e-8);
}

TEST_CASE("empty measurement list leaves the belief unchanged") {
  const auto p = params();
  auto cfg = quiet_config();
  Belief b = Belief::from_grid_state(traffic::uniform_equilibrium(0.03, p), cfg);
  auto post = ukf_update(b, {}, p, cfg);
  CHECK(post.mean == b.mean);
  CHECK(post.cov == b.cov);
}

TEST_CASE("tight measurement pins the posterior at the cell") {
  const auto p = params();
  UkfConfig cfg = quiet_config();
  cfg.noise.measurement_std = 1e-6;
  Belief b = Belief::from_grid_state(traffic::uniform_equilibrium(0.03, p), cfg);
  const double prior_speed = b.mean[p.n_cells + 4];
  std::vector<CvMeasurement> ms = {{0, 4.0 * p.cell_length, prior_speed - 2.0, 0}};
  auto post = ukf_update(b, ms, p, cfg);
  CHECK(post.mean[p.n_cells + 4] == doctest::Approx(prior_speed - 2.0).epsilon(1e-6));
}

TEST_CASE("out-of-grid measurements are rejected and reported") {
  const auto p = params();
  auto cfg = quiet_config();
  Belief b = Belief::from_grid_state(traffic::uniform_equilibrium(0.03, p), cfg);
  std::vector<CvMeasurement> ms = {{0, -5.0, 10.0, 0}, {1, 2.0 * p.cell_length, 10.0, 0}};
  std::vector<int> rejected;
  auto post = ukf_update(b, ms, p, cfg, &rejected);
  CHECK(rejected == std::vector<int>{0});
  CHECK(post.mean != b.mean);
}

TEST_CASE("covariance stays symmetric positive semidefinite") {
  const auto p = params();
  UkfConfig cfg;
  cfg.noise.density_std = 1e-4;
  cfg.noise.speed_std = 0.05;
  Belief b = Belief::from_grid_state(traffic::uniform_equilibrium(0.05, p), cfg);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0.0, (p.n_cells - 1) * p.cell_length * 0.99);
  for (int k = 0; k < 30; ++k) {
    b = ukf_predict(b, {}, k, p, cfg);
    std::vector<CvMeasurement> ms;
    for (int i = 0; i < 3; ++i) ms.push_back({i, pos(rng), 10.0 + i, k});
    b = ukf_update(b, ms, p, cfg);
    CHECK((b.cov - b.cov.transpose()).norm() < 1e-12);
    CHECK(min_eigenvalue(b.cov) > -1e-9);
  }
}

TEST_CASE("no measurements: filter mean equals the deterministic rollout") {
  const auto p = params();
  auto cfg = quiet_config();  // zero process noise
  auto state = traffic::uniform_equilibrium(0.04, p);
  state.density[8] = 0.07;
  Belief b;
  b.mean = Belief::from_grid_state(state, cfg).mean;
  b.cov = Eigen::MatrixXd::Zero(b.mean.size(), b.mean.size());

  auto rollout = state;
  for (int k = 0; k < 20; ++k) {
    b = ukf_predict(b, {}, k, p, cfg);
    rollout = traffic::step(rollout, {}, k, p);
  }
  const auto grid = b.to_grid_state();
  for (int j = 0; j < p.n_cells; ++j) {
    CHECK(grid.speed[j] == doctest::Approx(rollout.speed[j]).epsilon(1e-9));
  }
}

TEST_CASE("free-flow lead prediction is a straight line") {
  const auto p = params();
  auto cfg = quiet_config();
  auto state = uniform_equilibrium(0.01, p);  // free flow at v0
  Belief b;
  b.mean = Belief::from_grid_state(state, cfg).mean;
  b.cov = Eigen::MatrixXd::Zero(b.mean.size(), b.mean.size());

  auto pred = predict_lead(b, 50.0, p.free_flow_speed, {}, 0, 10.0, p, cfg);
  for (int t = 0; t <= 100; t += 10) {
    CHECK(pred.position_m[t] == doctest::Approx(50.0 + p.free_flow_speed * t * p.dt));
    CHECK(pred.sigma_position_m[t] == 0.0);
  }
}

TEST_CASE("red signal ahead stops the predicted lead before the bar") {
  const auto p = params();
  auto cfg = quiet_config();
  auto state = traffic::uniform_equilibrium(0.02, p);
  Belief b;
  b.mean = Belief::from_grid_state(state, cfg).mean;
  b.cov = Eigen::MatrixXd::Zero(b.mean.size(), b.mean.size());

  traffic::SignalSchedule sched;
  const int stop_cell = 8;
  sched.signals.push_back({stop_cell, {{0, 2000}}});
  auto pred = predict_lead(b, 2.0 * p.cell_length, 13.0, sched, 0, 10.0, p, cfg);
  CHECK(pred.speed_mps.back() < 1.0);
  CHECK(pred.position_m.back() <= (stop_cell + 1) * p.cell_length);
  // Monotone outputs.
  for (size_t i = 1; i < pred.position_m.size(); ++i) {
    CHECK(pred.position_m[i] >= pred.position_m[i - 1]);
    CHECK(pred.sigma_position_m[i] >= pred.sigma_position_m[i - 1]);
  }
}

TEST_CASE("posterior beats open-loop propagation on a noisy rollout") {
  const auto p = params();
  UkfConfig cfg;
  cfg.noise.density_std = 5e-5;
  cfg.noise.speed_std = 0.08;
  cfg.noise.measurement_std = 0.4;

  std::mt19937_64 world(99);
  traffic::NoiseSpec world_noise;
  world_noise.density_std = 5e-5;
  world_noise.speed_std = 0.08;
  world_noise.measurement_std = 0.4;

  // Ground truth starts congested mid-window; the prior does not know it.
  auto truth = traffic::uniform_equilibrium(0.03, p);
  for (int j = 6; j < 13; ++j) {
    truth.density[j] = 0.1;
    truth.speed[j] = traffic::equilibrium_speed(0.1, p);
  }
  Belief filtered = Belief::from_grid_state(traffic::uniform_equilibrium(0.03, p), cfg);
  Belief open = filtered;

  std::normal_distribution<double> meas(0.0, world_noise.measurement_std);
  double err_f = 0.0, err_o = 0.0;
  for (int k = 0; k < 120; ++k) {
    truth = traffic::step(truth, {}, k, p, &world_noise, &world);
    filtered = ukf_predict(filtered, {}, k, p, cfg);
    open = ukf_predict(open, {}, k, p, cfg);
    std::vector<CvMeasurement> ms;
    for (int i = 0; i < 5; ++i) {
      const double pos = (2.0 + 3.5 * i) * p.cell_length;
      ms.push_back({i, pos, traffic::measure_speed(truth, pos, p) + meas(world), k});
    }
    filtered = ukf_update(filtered, ms, p, cfg);
    for (int j = 0; j < p.n_cells; ++j) {
      const double tf = filtered.mean[p.n_cells + j] - truth.speed[j];
      const double to = open.mean[p.n_cells + j] - truth.speed[j];
      err_f += tf * tf;
      err_o += to * to;
    }
  }
  CHECK(err_f < err_o);
}

TEST_CASE("window shift keeps retained cells and resets fresh ones") {
  const auto p = params();
  auto cfg = quiet_config();
  auto state = traffic::uniform_equilibrium(0.05, p);
  for (int j = 0; j < p.n_cells; ++j) state.speed[j] = 1.0 + j;
  Belief b = Belief::from_grid_state(state, cfg);
  auto shifted = shift_window(b, 3, 0.02, 12.0, cfg);
  CHECK(shifted.mean[p.n_cells + 0] == doctest::Approx(1.0 + 3));
  CHECK(shifted.mean[p.n_cells + p.n_cells - 4] == doctest::Approx(1.0 + p.n_cells - 1));
  CHECK(shifted.mean[p.n_cells + p.n_cells - 1] == doctest::Approx(12.0));
}
