#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ecodrive/branch_and_bound.hpp"
#include "ecodrive/config.hpp"
#include "ecodrive/dp_oracle.hpp"
#include "ecodrive/energy.hpp"
#include "ecodrive/mip_formulation.hpp"
#include "ecodrive/mpc_controller.hpp"
#include "ecodrive/powertrain.hpp"
#include "ecodrive/scenario.hpp"
#include "ecodrive/traffic_flow.hpp"

namespace py = pybind11;
using namespace ecodrive;

namespace {

config::Variant variant_of(const std::string& name) {
  return name == "single" ? config::Variant::kSingleSpeed : config::Variant::kThreeSpeed;
}

}  // namespace

PYBIND11_MODULE(_ecodrive, m) {
  m.doc() = "eco-driving co-optimization toolkit";

  // --- traffic ------------------------------------------------------------
  py::class_<traffic::TrafficParams>(m, "TrafficParams")
      .def(py::init<>())
      .def_readwrite("free_flow_speed", &traffic::TrafficParams::free_flow_speed)
      .def_readwrite("congestion_gradient", &traffic::TrafficParams::congestion_gradient)
      .def_readwrite("jam_density", &traffic::TrafficParams::jam_density)
      .def_readwrite("relaxation_time", &traffic::TrafficParams::relaxation_time)
      .def_readwrite("pressure_coeff", &traffic::TrafficParams::pressure_coeff)
      .def_readwrite("cell_length", &traffic::TrafficParams::cell_length)
      .def_readwrite("dt", &traffic::TrafficParams::dt)
      .def_readwrite("n_cells", &traffic::TrafficParams::n_cells)
      .def("critical_density", &traffic::TrafficParams::critical_density);

  py::class_<traffic::TrafficGridState>(m, "TrafficGridState")
      .def(py::init<>())
      .def_readwrite("density", &traffic::TrafficGridState::density)
      .def_readwrite("speed", &traffic::TrafficGridState::speed);

  m.def("equilibrium_speed", &traffic::equilibrium_speed, py::arg("density"), py::arg("params"));
  m.def(
      "traffic_step",
      [](const traffic::TrafficGridState& s, const traffic::TrafficParams& p) {
        return traffic::step(s, {}, 0, p);
      },
      py::arg("state"), py::arg("params"), "One deterministic signal-free model step");
  m.def(
      "measure_speed",
      [](const traffic::TrafficGridState& s, double pos, const traffic::TrafficParams& p) {
        return traffic::measure_speed(s, pos, p);
      },
      py::arg("state"), py::arg("position_m"), py::arg("params"));
  m.def("uniform_equilibrium", &traffic::uniform_equilibrium, py::arg("density"),
        py::arg("params"));

  // --- powertrain -----------------------------------------------------------
  py::class_<powertrain::MotorMap>(m, "MotorMap")
      .def_readonly("p00", &powertrain::MotorMap::p00)
      .def_readonly("p10", &powertrain::MotorMap::p10)
      .def_readonly("p01", &powertrain::MotorMap::p01)
      .def_readonly("p11", &powertrain::MotorMap::p11)
      .def("efficiency_at", &powertrain::MotorMap::efficiency_at)
      .def("torque_max_at", &powertrain::MotorMap::torque_max_at);

  py::class_<powertrain::GearDesignReport>(m, "GearDesignReport")
      .def_readonly("uphill_margin", &powertrain::GearDesignReport::uphill_margin)
      .def_readonly("top_speed_margin", &powertrain::GearDesignReport::top_speed_margin)
      .def_readonly("pass_", &powertrain::GearDesignReport::pass);

  m.def("drive_power_exact", &powertrain::drive_power_exact, py::arg("torque"), py::arg("w_m"),
        py::arg("map"));
  m.def("drive_power_fitted", &powertrain::drive_power_fitted, py::arg("torque"), py::arg("w_m"),
        py::arg("map"));
  m.def(
      "battery_power",
      [](double i_b, double soc, const config::Bundle& b) {
        return powertrain::battery_power(i_b, soc, b.three_speed.battery);
      },
      py::arg("i_b"), py::arg("soc"), py::arg("bundle"));
  m.def(
      "current_from_power",
      [](double p_b, double soc, const config::Bundle& b) {
        return powertrain::current_from_power(p_b, soc, b.three_speed.battery);
      },
      py::arg("p_b"), py::arg("soc"), py::arg("bundle"));
  m.def(
      "check_gear_design",
      [](const config::Bundle& b, const std::string& variant) {
        const auto& plant = b.plant(variant_of(variant));
        return powertrain::check_gear_design(plant.gears, plant);
      },
      py::arg("bundle"), py::arg("variant") = "three");

  // --- config ----------------------------------------------------------------
  py::class_<config::Bundle>(m, "Bundle")
      .def_property_readonly("motor_map",
                             [](const config::Bundle& b) { return b.three_speed.motor; });
  m.def("default_bundle", &config::default_bundle);
  m.def("load_bundle", &config::load_bundle, py::arg("json_path"));

  // --- solver ------------------------------------------------------------------
  py::class_<solver::MipResult>(m, "MipResult")
      .def_readonly("has_incumbent", &solver::MipResult::has_incumbent)
      .def_readonly("objective", &solver::MipResult::objective)
      .def_readonly("best_bound", &solver::MipResult::best_bound)
      .def_readonly("nodes", &solver::MipResult::nodes)
      .def_readonly("values", &solver::MipResult::values)
      .def("status", &solver::MipResult::status_string);

  py::class_<mip::ProblemSpec>(m, "ProblemSpec")
      .def(py::init<>())
      .def("add_var", &mip::ProblemSpec::add_var, py::arg("name"), py::arg("lb"), py::arg("ub"),
           py::arg("obj") = 0.0)
      .def("add_binary", &mip::ProblemSpec::add_binary, py::arg("name"), py::arg("obj") = 0.0)
      .def(
          "add_row",
          [](mip::ProblemSpec& spec, const std::string& name, double lb, double ub,
             const std::vector<std::pair<int, double>>& entries) {
            std::vector<mip::RowEntry> rows;
            for (auto [v, c] : entries) rows.push_back({v, c});
            return spec.add_row(name, lb, ub, std::move(rows));
          },
          py::arg("name"), py::arg("lb"), py::arg("ub"), py::arg("entries"))
      .def("add_sos2", &mip::ProblemSpec::add_sos2, py::arg("name"), py::arg("vars"))
      .def("serialize", &mip::ProblemSpec::serialize)
      .def_static("parse", &mip::ProblemSpec::parse);

  m.def(
      "solve_mip",
      [](const mip::ProblemSpec& spec, double gap_tol, long node_limit) {
        solver::SolverLimits lim;
        lim.time_budget_s = 0.0;
        lim.gap_tol = gap_tol;
        lim.node_limit = node_limit;
        return solver::solve(spec, lim);
      },
      py::arg("spec"), py::arg("gap_tol") = 1e-9, py::arg("node_limit") = 100000);

  // --- episodes -------------------------------------------------------------------
  m.def(
      "run_episode",
      [](std::uint64_t seed, const std::string& variant, double duration_s) {
        auto bundle = config::default_bundle();
        mpc::EpisodeSetup setup;
        setup.sc.signals.push_back({600.0, 60.0, 32.0, 18.0});
        setup.sc.signals.push_back({1200.0, 60.0, 32.0, 45.0});
        setup.sc.duration_s = duration_s;
        setup.seed = seed;
        auto log = mpc::run_episode(setup, bundle, variant_of(variant));
        auto rep = energy::make_report(log, bundle.plant(variant_of(variant)), setup.soc_start);
        py::dict d;
        d["completed"] = rep.completed;
        d["wh_per_km"] = rep.wh_per_km;
        d["distance_m"] = rep.distance_m;
        d["stops"] = rep.stops;
        d["soc_consumed"] = rep.soc_consumed;
        d["slack_min_max"] = rep.slack_min_max;
        return d;
      },
      py::arg("seed") = 1, py::arg("variant") = "three", py::arg("duration_s") = 30.0);
}
