#include "ecodrive/powertrain.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "ecodrive/config.hpp"

using namespace ecodrive;
using namespace ecodrive::powertrain;

namespace {

MotorMap flat_map(double eta) {
  MotorMap m;
  m.speed_grid = {0.0, 500.0, 1000.0};
  m.torque_grid = {-200.0, 0.0, 200.0};
  m.efficiency.assign(9, eta);
  m.torque_max_curve = {200.0, 200.0, 200.0};
  m.speed_max = 1000.0;
  return m;
}

const config::Bundle& bundle() {
  static config::Bundle b = config::default_bundle();
  return b;
}

}  // namespace

TEST_CASE("exact drive power branches") {
  auto m = flat_map(0.9);
  CHECK(drive_power_exact(0.0, 400.0, m) == 0.0);
  CHECK(drive_power_exact(50.0, 400.0, m) == doctest::Approx(400.0 * 50.0 / 0.9));
  CHECK(drive_power_exact(-50.0, 400.0, m) == doctest::Approx(0.9 * 400.0 * -50.0));
  // Regeneration recovers less than the mechanical power.
  CHECK(std::abs(drive_power_exact(-50.0, 400.0, m)) < 400.0 * 50.0);
  CHECK_THROWS_AS(drive_power_exact(250.0, 400.0, m), std::domain_error);
  CHECK_THROWS_AS(drive_power_exact(10.0, 1200.0, m), std::domain_error);
}

TEST_CASE("published fitted coefficients reproduce the reference arithmetic") {
  auto m = flat_map(0.9);
  m.p00 = 1344.5;
  m.p10 = 1.64;
  m.p01 = 28.1;
  m.p11 = 1.0;
  CHECK(drive_power_fitted(0.0, 0.0, m) == doctest::Approx(1344.5));
  CHECK(drive_power_fitted(50.0, 100.0, m) == doctest::Approx(1344.5 + 164.0 + 1405.0 + 5000.0));
}

TEST_CASE("bundled map refit quality") {
  const auto& motor = bundle().three_speed.motor;
  auto fit = fit_drive_power_polynomial(motor);
  CHECK(fit.r_squared >= 0.95);
  // The bundled coefficients are exactly the refit output.
  CHECK(motor.p00 == doctest::Approx(fit.p00));
  CHECK(motor.p11 == doctest::Approx(fit.p11));
}

TEST_CASE("battery power identities") {
  const auto& pack = bundle().three_speed.battery;
  CHECK(battery_power(0.0, 0.5, pack) == 0.0);
  const double voc = pack.voc.at(0.5);
  const double r = pack.resistance.at(0.5);
  const double i_star = pack.n_parallel * voc / (2.0 * r);
  CHECK(battery_power(i_star, 0.5, pack) ==
        doctest::Approx(pack.n_series * pack.n_parallel * voc * voc / (4.0 * r)));
  CHECK(pack.max_deliverable_power(0.5) ==
        doctest::Approx(pack.n_series * pack.n_parallel * voc * voc / (4.0 * r)));
}

TEST_CASE("current/power round trip") {
  const auto& pack = bundle().three_speed.battery;
  CHECK(current_from_power(0.0, 0.5, pack) == doctest::Approx(0.0));
  const double p_max = pack.max_deliverable_power(0.6);
  const double voc = pack.voc.at(0.6);
  const double r = pack.resistance.at(0.6);
  CHECK(current_from_power(p_max, 0.6, pack) ==
        doctest::Approx(pack.n_parallel * voc / (2.0 * r)).epsilon(1e-6));
  CHECK_THROWS_AS(current_from_power(p_max * 1.01, 0.6, pack), std::runtime_error);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> cur(-300.0, 500.0);
  std::uniform_real_distribution<double> soc(0.05, 0.95);
  for (int t = 0; t < 200; ++t) {
    const double i = cur(rng);
    const double s = soc(rng);
    const double p = battery_power(i, s, pack);
    const double i2 = current_from_power(p, s, pack);
    CHECK(i2 == doctest::Approx(i).epsilon(1e-6));
  }
}

TEST_CASE("plant at rest draws only auxiliary power") {
  const auto& plant = bundle().three_speed;
  VehicleState s;
  s.speed_mps = 0.0;
  s.soc = 0.7;
  StepInfo info;
  auto next = simulate_step(s, {0.0, 0.0, 1}, 0.2, plant, &info);
  CHECK(next.speed_mps == 0.0);
  CHECK(next.position_m == 0.0);
  CHECK(info.battery_power == doctest::Approx(plant.battery.p_aux));
  CHECK(next.soc < s.soc);
  const double i_aux = current_from_power(plant.battery.p_aux, 0.7, plant.battery);
  CHECK(s.soc - next.soc == doctest::Approx(i_aux * 0.2 / plant.battery.capacity_As));
}

TEST_CASE("steady cruise balances forces") {
  const auto& plant = bundle().three_speed;
  VehicleState s;
  s.speed_mps = 20.0;
  s.soc = 0.7;
  s.gear = 1;  // ratio 17.1
  const double r = plant.gears.ratios[0];
  const double f_req = plant.vehicle.road_load(0.0) +
                       plant.vehicle.drag_coeff * s.speed_mps * s.speed_mps;
  StepInfo info;
  auto next = simulate_step(s, {f_req / r, 0.0, 1}, 0.2, plant, &info);
  CHECK(info.accel == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(next.speed_mps == doctest::Approx(20.0));
}

TEST_CASE("regeneration raises the state of charge") {
  const auto& plant = bundle().three_speed;
  VehicleState s;
  s.speed_mps = 15.0;
  s.soc = 0.6;
  s.gear = 3;
  StepInfo info;
  auto next = simulate_step(s, {-60.0, 0.0, 3}, 0.2, plant, &info);
  CHECK(info.accel < 0.0);
  CHECK(info.battery_power < 0.0);
  CHECK(next.soc > s.soc);
}

TEST_CASE("torque and brake bounds are enforced") {
  const auto& plant = bundle().three_speed;
  VehicleState s;
  s.speed_mps = 30.0;
  s.gear = 3;  // w_m = 32.3 * 30 = 969 rad/s, curve-limited torque
  const double cap = plant.motor.torque_max_at(32.3 * 30.0);
  CHECK(cap < 150.0);
  CHECK_THROWS_AS(simulate_step(s, {cap + 5.0, 0.0, 3}, 0.2, plant, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(simulate_step(s, {0.0, -1.0, 3}, 0.2, plant, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(simulate_step(s, {0.0, 0.0, 7}, 0.2, plant, nullptr), std::invalid_argument);
}

TEST_CASE("halving the step converges to the same trajectory") {
  const auto& plant = bundle().three_speed;
  VehicleState coarse;
  coarse.speed_mps = 10.0;
  coarse.soc = 0.7;
  Controls u{80.0, 0.0, 2};
  auto one = simulate_step(coarse, u, 0.2, plant, nullptr);
  auto half = simulate_step(coarse, u, 0.1, plant, nullptr);
  half = simulate_step(half, u, 0.1, plant, nullptr);
  // First-order consistency: halving the step changes the result at O(dt^2).
  CHECK(std::abs(one.speed_mps - half.speed_mps) < 0.02);
  CHECK(std::abs(one.position_m - half.position_m) < 0.2);
  CHECK(std::abs(one.soc - half.soc) < 1e-6);
}

TEST_CASE("gear design audit") {
  const auto& b = bundle();
  auto three = check_gear_design(b.three_speed.gears, b.three_speed);
  CHECK(three.pass);
  CHECK(three.uphill_margin > 0.0);
  CHECK(three.top_speed_margin > 0.0);

  auto single = check_gear_design(b.single_speed.gears, b.single_speed);
  CHECK(single.pass);

  GearSet bad = b.three_speed.gears;
  bad.ratios = {40.0, 45.0, 50.0};  // r_min too large for the top speed
  auto rep = check_gear_design(bad, b.three_speed);
  CHECK(!rep.pass);
  CHECK(rep.top_speed_margin < 0.0);
}

TEST_CASE("soc clamp is reported") {
  const auto& plant = bundle().three_speed;
  VehicleState s;
  s.speed_mps = 0.0;
  s.soc = 1e-9;
  StepInfo info;
  auto next = simulate_step(s, {0.0, 0.0, 1}, 0.2, plant, &info);
  CHECK(next.soc == 0.0);
  CHECK(info.soc_clamped);
}
