#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"

#include "ecodrive/config.hpp"
#include "ecodrive/dp_oracle.hpp"
#include "ecodrive/energy.hpp"
#include "ecodrive/mpc_controller.hpp"
#include "ecodrive/scenario.hpp"

namespace fs = std::filesystem;
using namespace ecodrive;

namespace {

scenario::Scenario bundled_two_signal_scenario() {
  scenario::Scenario sc;
  sc.name = "two_signal";
  sc.road_length_m = 1800.0;
  sc.duration_s = 130.0;
  sc.signals.push_back({600.0, 60.0, 32.0, 18.0});
  sc.signals.push_back({1200.0, 60.0, 32.0, 45.0});
  sc.platoon.n_vehicles = 10;
  sc.platoon.cv_penetration = 0.5;
  sc.platoon.v_desire = 14.0;
  sc.platoon.spawn_speed = 10.0;
  return sc;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

int fail_json(const std::string& what) {
  nlohmann::json j;
  j["error"] = what;
  std::cerr << j.dump() << "\n";
  return 1;
}

config::Bundle load_bundle_opt(const std::string& config_path, double time_budget) {
  config::Bundle bundle =
      config_path.empty() ? config::default_bundle() : config::load_bundle(config_path);
  if (time_budget > 0) {
    bundle.limits.time_budget_s = time_budget;
    bundle.limits.work_limit = 0;  // wall-clock budget replaces the work metering
  }
  return bundle;
}

scenario::Scenario load_scenario_opt(const std::string& path) {
  return path.empty() ? bundled_two_signal_scenario() : scenario::load_scenario(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eco-driving co-optimization toolkit"};
  app.require_subcommand(1);

  std::string scenario_path, config_path, out_dir = "out", variant_name = "three";
  std::uint64_t seed = 1;
  int seeds = 1;
  double time_budget = 0.0;
  double horizon = 3.0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "scenario JSON (default: bundled two-signal)");
    cmd->add_option("--config", config_path, "config JSON overriding the built-in defaults");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--out-dir", out_dir, "output directory");
    cmd->add_option("--time-budget", time_budget,
                    "wall-clock per-cycle solver budget in seconds (replaces the deterministic "
                    "work limit)");
  };

  auto* cmd_predict = app.add_subcommand("predict", "run the traffic estimator along a scenario");
  add_common(cmd_predict);
  auto* cmd_run = app.add_subcommand("run", "run one eco-driving episode");
  add_common(cmd_run);
  cmd_run->add_option("--variant", variant_name, "transmission variant: three|single");
  auto* cmd_compare = app.add_subcommand("compare", "three-speed vs single-speed comparison");
  add_common(cmd_compare);
  cmd_compare->add_option("--seeds", seeds, "number of seeds in the batch");
  auto* cmd_oracle = app.add_subcommand("oracle", "dynamic-programming cross-check of the MIP");
  add_common(cmd_oracle);
  cmd_oracle->add_option("--horizon", horizon, "oracle horizon in seconds (<= 6)");
  auto* cmd_gears = app.add_subcommand("check-gears", "gear-ratio design audit");
  add_common(cmd_gears);

  CLI11_PARSE(app, argc, argv);

  try {
    const config::Bundle bundle = load_bundle_opt(config_path, time_budget);
    const fs::path out(out_dir);

    if (cmd_gears->parsed()) {
      nlohmann::json j;
      for (auto [name, variant] :
           {std::pair{"three_speed", config::Variant::kThreeSpeed},
            std::pair{"single_speed", config::Variant::kSingleSpeed}}) {
        const auto& plant = bundle.plant(variant);
        const auto rep = powertrain::check_gear_design(plant.gears, plant);
        j[name] = {{"pass", rep.pass},
                   {"uphill_margin_n", rep.uphill_margin},
                   {"top_speed_margin_mps", rep.top_speed_margin}};
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (cmd_predict->parsed()) {
      const auto sc = load_scenario_opt(scenario_path);
      auto platoon = scenario::generate_lead_trace(sc, seed);
      const auto& lead = platoon.vehicles.back();
      scenario::TrafficTracker tracker(bundle.traffic, bundle.ukf, sc.signals,
                                       lead.points.front().pos_m - bundle.traffic.cell_length);
      std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 17);
      std::normal_distribution<double> gauss(0.0, bundle.ukf.noise.measurement_std);

      std::ostringstream csv;
      csv << "t_s,h_s,d_pred_m,v_pred_mps,sigma_d_m,d_true_m\n";
      double se = 0.0, se_count = 0.0;
      const int cycles = static_cast<int>(sc.duration_s) - 10;
      for (int c = 0; c < cycles; ++c) {
        const double t = c * 1.0;
        const auto lp = lead.at(t);
        auto pred = tracker.predict_lead_absolute(lp.pos_m, lp.speed_mps, 10.0);
        for (int h = 0; h <= 100; h += 10) {
          const double tt = h * 0.1;
          const double truth = lead.at(t + tt).pos_m;
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%.1f,%.1f,%.3f,%.3f,%.3f,%.3f\n", t, tt,
                        pred.position_m[h], pred.speed_mps[h], pred.sigma_position_m[h], truth);
          csv << buf;
          se += (pred.position_m[h] - truth) * (pred.position_m[h] - truth);
          se_count += 1.0;
        }
        for (int s = 0; s < 10; ++s) {
          std::vector<estimation::CvMeasurement> ms;
          const double tm = t + (s + 1) * 0.1;
          for (size_t i = 0; i < platoon.vehicles.size(); ++i) {
            const bool sensed = i + 1 == platoon.vehicles.size() || platoon.is_cv[i];
            if (!sensed) continue;
            const auto p = platoon.vehicles[i].at(tm);
            ms.push_back({static_cast<int>(i), p.pos_m, std::max(0.0, p.speed_mps + gauss(rng)),
                          tracker.step()});
          }
          tracker.advance(ms);
        }
      }
      write_file(out / "prediction.csv", csv.str());
      nlohmann::json j;
      j["rmse_m"] = std::sqrt(se / std::max(1.0, se_count));
      j["cycles"] = cycles;
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (cmd_run->parsed()) {
      const auto sc = load_scenario_opt(scenario_path);
      mpc::EpisodeSetup setup;
      setup.sc = sc;
      setup.seed = seed;
      const auto variant =
          variant_name == "single" ? config::Variant::kSingleSpeed : config::Variant::kThreeSpeed;
      auto log = mpc::run_episode(setup, bundle, variant);
      write_file(out / "episode.csv", energy::episode_csv(log));
      auto rep = energy::make_report(log, bundle.plant(variant), setup.soc_start);
      write_file(out / "energy_report.json", energy::report_to_json(rep));
      std::cout << energy::report_to_json(rep) << "\n";
      return log.completed ? 0 : fail_json("episode aborted: " + log.failure);
    }

    if (cmd_compare->parsed()) {
      const auto sc = load_scenario_opt(scenario_path);
      nlohmann::json batch = nlohmann::json::array();
      double mean3 = 0, mean1 = 0;
      int completed = 0;
      for (int s = 0; s < seeds; ++s) {
        mpc::EpisodeSetup setup;
        setup.sc = sc;
        setup.seed = seed + s;
        auto cmp = energy::run_comparison(setup, bundle);
        nlohmann::json j = nlohmann::json::parse(energy::comparison_to_json(cmp));
        j["seed"] = seed + s;
        batch.push_back(j);
        if (cmp.valid) {
          mean3 += cmp.three_speed.wh_per_km;
          mean1 += cmp.single_speed.wh_per_km;
          ++completed;
        }
      }
      nlohmann::json j;
      j["runs"] = batch;
      if (completed > 0) {
        mean3 /= completed;
        mean1 /= completed;
        j["mean_wh_per_km_three_speed"] = mean3;
        j["mean_wh_per_km_single_speed"] = mean1;
        j["mean_savings_pct"] = (mean1 - mean3) / mean1 * 100.0;
      }
      j["completed_pairs"] = completed;
      write_file(out / "comparison.json", j.dump(2));
      std::cout << j.dump(2) << "\n";
      return completed == seeds ? 0 : fail_json("some comparison runs failed");
    }

    if (cmd_oracle->parsed()) {
      const auto sc = load_scenario_opt(scenario_path);
      auto platoon = scenario::generate_lead_trace(sc, seed);
      const auto& lead = platoon.vehicles.back();
      const auto& plant = bundle.three_speed;

      mip::CycleInput in;
      in.state.position_m = lead.points.front().pos_m - 20.0;
      in.state.speed_mps = std::max(0.0, lead.points.front().speed_mps);
      in.state.soc = 0.7;
      in.n_steps = static_cast<int>(horizon / 0.2 + 0.5);
      in.dt = 0.2;
      estimation::LeadPrediction pred;
      pred.dt = 0.1;
      for (int i = 0; i <= static_cast<int>(horizon * 10) + 1; ++i) {
        const auto p = lead.at(i * 0.1);
        pred.position_m.push_back(p.pos_m);
        pred.speed_mps.push_back(std::max(0.0, p.speed_mps));
        pred.sigma_position_m.push_back(0.0);
      }
      in.lead = pred;
      in.pb_min = powertrain::battery_power(plant.battery.i_charge.at(0.7), 0.7, plant.battery);
      in.pb_max = powertrain::battery_power(plant.battery.i_discharge.at(0.7), 0.7, plant.battery);

      auto built = mip::build_problem(in, bundle.weights, plant, bundle.mip);
      auto heur = [&](const std::vector<double>& r, std::vector<double>* c) {
        return mip::round_and_repair(built, r, plant, bundle.mip, c);
      };
      solver::SolverLimits lim = bundle.limits;
      lim.node_limit = 4000;
      lim.work_limit = 0;
      lim.time_budget_s = 30.0;
      auto res = solver::solve(built.spec, lim, nullptr, heur);
      if (!res.has_incumbent) return fail_json("MIP found no incumbent on the oracle instance");
      auto traj = mip::extract_trajectory(built, res.values);
      const double j_mip =
          mip::evaluate_objective(traj, built.d_z, bundle.weights, in.dt, plant, false);

      dp::DpGrid grid;
      auto dp_poly = dp::dp_solve(in, bundle.weights, plant, grid, true);
      auto dp_exact = dp::dp_solve(in, bundle.weights, plant, grid, false);

      nlohmann::json j;
      j["mip_objective_polynomial_power"] = j_mip;
      j["dp_objective_polynomial_power"] =
          dp_poly.status == dp::DpStatus::kOptimal ? dp_poly.objective : -1.0;
      j["dp_objective_exact_map"] =
          dp_exact.status == dp::DpStatus::kOptimal ? dp_exact.objective : -1.0;
      if (dp_poly.status == dp::DpStatus::kOptimal && dp_exact.status == dp::DpStatus::kOptimal) {
        j["relaxation_error"] = j_mip - dp_poly.objective;
        j["fit_error"] = dp_poly.objective - dp_exact.objective;
      }
      std::cout << j.dump(2) << "\n";
      write_file(out / "oracle.json", j.dump(2));
      return 0;
    }
  } catch (const std::exception& e) {
    return fail_json(e.what());
  }
  return fail_json("no subcommand");
}
