#include "ecodrive/energy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace ecodrive::energy {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

EnergyReport make_report(const mpc::EpisodeLog& log, const powertrain::PlantConfig& plant,
                         double soc_start) {
  EnergyReport rep;
  rep.completed = log.completed;
  rep.failure = log.failure;
  rep.fallback_cycles = log.fallback_cycles;
  rep.slack_min_max = log.slack_min_max;
  rep.slack_max_max = log.slack_max_max;
  rep.projection_frac_max = log.projection_frac_max;
  if (!log.completed) return rep;

  rep.soc_consumed = soc_start - log.soc_end;
  rep.distance_m = log.distance_m;
  rep.stops = log.stop_count;
  const double km = std::max(1e-6, log.distance_m / 1000.0);
  rep.wh_per_km = (log.energy_pb_j / 3600.0) / km;

  // Charge-based accounting: open-circuit energy drawn from the store at the
  // mean terminal Voc, minus the ohmic losses integrated along the episode.
  const double voc_mean = 0.5 * plant.battery.n_series *
                          (plant.battery.voc.at(soc_start) + plant.battery.voc.at(log.soc_end));
  const double e_oc = log.charge_as * voc_mean;
  rep.wh_per_km_soc = ((e_oc - log.energy_loss_j) / 3600.0) / km;

  rep.wh_accel = log.energy_accel_j / 3600.0;
  rep.wh_cruise = log.energy_cruise_j / 3600.0;
  rep.wh_regen = log.energy_regen_j / 3600.0;
  rep.solve_ms_median = median(log.cycle_solve_ms);
  rep.solve_ms_max =
      log.cycle_solve_ms.empty()
          ? 0.0
          : *std::max_element(log.cycle_solve_ms.begin(), log.cycle_solve_ms.end());
  std::vector<double> gaps;
  for (double g : log.cycle_gap) {
    if (std::isfinite(g)) gaps.push_back(g);
  }
  rep.gap_median = median(gaps);
  return rep;
}

ComparisonReport run_comparison(const mpc::EpisodeSetup& setup, const config::Bundle& bundle) {
  ComparisonReport cmp;
  auto log3 = mpc::run_episode(setup, bundle, config::Variant::kThreeSpeed);
  auto log1 = mpc::run_episode(setup, bundle, config::Variant::kSingleSpeed);
  cmp.three_speed = make_report(log3, bundle.three_speed, setup.soc_start);
  cmp.single_speed = make_report(log1, bundle.single_speed, setup.soc_start);
  cmp.valid = cmp.three_speed.completed && cmp.single_speed.completed;
  if (cmp.valid && cmp.single_speed.wh_per_km > 0) {
    cmp.savings_pct =
        (cmp.single_speed.wh_per_km - cmp.three_speed.wh_per_km) / cmp.single_speed.wh_per_km *
        100.0;
  }
  return cmp;
}

namespace {

nlohmann::json report_json(const EnergyReport& r) {
  nlohmann::json j;
  j["completed"] = r.completed;
  if (!r.failure.empty()) j["failure"] = r.failure;
  j["soc_consumed"] = r.soc_consumed;
  j["wh_per_km"] = r.wh_per_km;
  j["wh_per_km_soc_accounting"] = r.wh_per_km_soc;
  j["distance_m"] = r.distance_m;
  j["stops"] = r.stops;
  j["wh_accel"] = r.wh_accel;
  j["wh_cruise"] = r.wh_cruise;
  j["wh_regen"] = r.wh_regen;
  j["solve_ms_median"] = r.solve_ms_median;
  j["solve_ms_max"] = r.solve_ms_max;
  j["gap_median"] = r.gap_median;
  j["fallback_cycles"] = r.fallback_cycles;
  j["slack_min_max_m"] = r.slack_min_max;
  j["slack_max_max_m"] = r.slack_max_max;
  j["projection_frac_max"] = r.projection_frac_max;
  return j;
}

}  // namespace

std::string report_to_json(const EnergyReport& rep) { return report_json(rep).dump(2); }

std::string comparison_to_json(const ComparisonReport& rep) {
  nlohmann::json j;
  j["three_speed"] = report_json(rep.three_speed);
  j["single_speed"] = report_json(rep.single_speed);
  j["savings_pct"] = rep.savings_pct;
  j["valid"] = rep.valid;
  return j.dump(2);
}

std::string episode_csv(const mpc::EpisodeLog& log) {
  std::ostringstream out;
  out << "t_s,d_m,v_mps,a_mps2,gear,Tm_Nm,Fb_N,Pb_W,SOC,s_max_m,s_min_m,solve_ms,gap\n";
  char buf[320];
  for (const auto& s : log.steps) {
    std::snprintf(buf, sizeof(buf), "%.1f,%.6f,%.6f,%.6f,%d,%.6f,%.6f,%.6f,%.9f,%.6f,%.6f,%.3f,%.6g\n",
                  s.t_s, s.d_m, s.v_mps, s.a_mps2, s.gear, s.tm_nm, s.fb_n, s.pb_w, s.soc,
                  s.s_max_m, s.s_min_m, s.solve_ms, s.gap);
    out << buf;
  }
  return out.str();
}

}  // namespace ecodrive::energy
