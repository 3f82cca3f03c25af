#include "ecodrive/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ecodrive::scenario {

bool SignalTiming::red_at(double t) const {
  double phase = std::fmod(t - offset_s, cycle_s);
  if (phase < 0) phase += cycle_s;
  return phase >= green_s;
}

void SignalTiming::validate() const {
  if (cycle_s <= 0 || green_s < 0 || green_s > cycle_s) {
    throw std::invalid_argument("malformed signal timing");
  }
}

TracePoint Trace::at(double t) const {
  if (points.empty()) return {};
  if (t <= points.front().t_s) return points.front();
  if (t >= points.back().t_s) return points.back();
  auto it = std::upper_bound(points.begin(), points.end(), t,
                             [](double tt, const TracePoint& p) { return tt < p.t_s; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double f = (t - a.t_s) / (b.t_s - a.t_s);
  return {t, a.pos_m + f * (b.pos_m - a.pos_m), a.speed_mps + f * (b.speed_mps - a.speed_mps)};
}

void Trace::validate() const {
  for (size_t i = 1; i < points.size(); ++i) {
    if (points[i].t_s <= points[i - 1].t_s) {
      throw std::invalid_argument("trace times must be strictly increasing at row " +
                                  std::to_string(i + 1));
    }
    if (points[i].pos_m < points[i - 1].pos_m - 1e-9) {
      throw std::invalid_argument("trace positions must be non-decreasing at row " +
                                  std::to_string(i + 1));
    }
  }
}

void Scenario::validate() const {
  if (road_length_m <= 0 || duration_s <= 0 || trace_dt <= 0) {
    throw std::invalid_argument("scenario extents must be positive");
  }
  if (platoon.cv_penetration < 0 || platoon.cv_penetration > 1) {
    throw std::invalid_argument("penetration must be within [0,1]");
  }
  for (const auto& s : signals) s.validate();
}

namespace {

struct IdmParams {
  double v0 = 14.0;   // desired speed
  double t_hw = 1.2;  // time headway
  double a = 1.4;     // max accel
  double b = 2.0;     // comfortable decel
  double s0 = 2.5;    // standstill gap
};

double idm_accel(double v, double gap, double dv, const IdmParams& p) {
  const double s_star = p.s0 + std::max(0.0, v * p.t_hw + v * dv / (2.0 * std::sqrt(p.a * p.b)));
  const double ratio = v / std::max(p.v0, 0.1);
  double acc = p.a * (1.0 - ratio * ratio * ratio * ratio);
  if (gap < 1e9) acc -= p.a * (s_star / std::max(gap, 0.1)) * (s_star / std::max(gap, 0.1));
  return acc;
}

}  // namespace

PlatoonTrace generate_lead_trace(const Scenario& sc, std::uint64_t seed) {
  sc.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int n = std::max(1, sc.platoon.n_vehicles);
  std::vector<IdmParams> idm(n);
  for (int i = 0; i < n; ++i) {
    idm[i].v0 = sc.platoon.v_desire * (0.9 + 0.2 * unit(rng));
    idm[i].t_hw = 1.0 + 0.5 * unit(rng);
    idm[i].a = 1.2 + 0.5 * unit(rng);
    idm[i].b = 1.8 + 0.6 * unit(rng);
  }

  PlatoonTrace out;
  out.is_cv.resize(n);
  for (int i = 0; i < n; ++i) out.is_cv[i] = unit(rng) < sc.platoon.cv_penetration;

  std::vector<double> pos(n), vel(n);
  for (int i = 0; i < n; ++i) {
    pos[i] = -i * sc.platoon.spawn_spacing;
    vel[i] = sc.platoon.spawn_speed;
  }

  const bool replay_head = sc.recorded_lead.has_value();
  const double dt = sc.trace_dt;
  const int steps = static_cast<int>(sc.duration_s / dt + 0.5);

  out.vehicles.assign(n, {});
  for (int i = 0; i < n; ++i) out.vehicles[i].points.reserve(steps + 1);

  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    for (int i = 0; i < n; ++i) {
      out.vehicles[i].points.push_back({t, pos[i], vel[i]});
    }
    if (k == steps) break;

    for (int i = 0; i < n; ++i) {
      if (i == 0 && replay_head) {
        const auto p = sc.recorded_lead->at(t + dt);
        pos[0] = p.pos_m;
        vel[0] = std::max(0.0, p.speed_mps);
        continue;
      }
      double gap = 1e18, dv = 0.0;
      if (i > 0) {
        gap = pos[i - 1] - pos[i] - 5.0;  // predecessor length
        dv = vel[i] - vel[i - 1];
      }
      // Red lights act as standing obstacles at the stop bar.
      for (const auto& sig : sc.signals) {
        const double dist = sig.position_m - pos[i];
        if (dist <= 0.5) continue;
        const double eta = dist / std::max(vel[i], 1.0);
        if (sig.red_at(t) || sig.red_at(t + eta)) {
          if (dist - 1.0 < gap) {
            gap = dist - 1.0;
            dv = vel[i];
          }
        }
      }
      const double acc = std::clamp(idm_accel(vel[i], gap, dv, idm[i]), -6.0, 3.0);
      vel[i] = std::max(0.0, vel[i] + acc * dt);
      pos[i] += vel[i] * dt;
    }
  }
  return out;
}

Scenario load_scenario(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + json_path);
  nlohmann::json j;
  in >> j;
  Scenario sc;
  sc.name = j.value("name", sc.name);
  sc.road_length_m = j.value("road_length_m", sc.road_length_m);
  sc.duration_s = j.value("duration_s", sc.duration_s);
  sc.trace_dt = j.value("trace_dt", sc.trace_dt);
  if (j.contains("signals")) {
    for (const auto& s : j["signals"]) {
      SignalTiming t;
      t.position_m = s.at("position_m").get<double>();
      t.cycle_s = s.value("cycle_s", t.cycle_s);
      t.green_s = s.value("green_s", t.green_s);
      t.offset_s = s.value("offset_s", t.offset_s);
      sc.signals.push_back(t);
    }
  }
  if (j.contains("platoon")) {
    const auto& p = j["platoon"];
    sc.platoon.n_vehicles = p.value("n_vehicles", sc.platoon.n_vehicles);
    sc.platoon.cv_penetration = p.value("cv_penetration", sc.platoon.cv_penetration);
    sc.platoon.v_desire = p.value("v_desire", sc.platoon.v_desire);
    sc.platoon.spawn_spacing = p.value("spawn_spacing", sc.platoon.spawn_spacing);
    sc.platoon.spawn_speed = p.value("spawn_speed", sc.platoon.spawn_speed);
    sc.platoon.comm_range_m = p.value("comm_range_m", sc.platoon.comm_range_m);
  }
  if (j.contains("lead_trace_csv")) {
    sc.recorded_lead = ingest_trace(j["lead_trace_csv"].get<std::string>());
  }
  sc.validate();
  return sc;
}

Trace ingest_trace(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open trace file: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file");
  if (line.rfind("t_s,pos_m,speed_mps", 0) != 0) {
    throw std::runtime_error("trace header must be t_s,pos_m,speed_mps");
  }
  Trace raw;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": expected 3 columns");
    }
    TracePoint p;
    try {
      p.t_s = std::stod(a);
      p.pos_m = std::stod(b);
      p.speed_mps = std::stod(c);
    } catch (const std::exception&) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": bad number");
    }
    if (!raw.points.empty() && p.t_s <= raw.points.back().t_s) {
      throw std::runtime_error("trace line " + std::to_string(lineno) +
                               ": timestamps out of order");
    }
    if (!raw.points.empty() && p.pos_m < raw.points.back().pos_m - 1e-9) {
      throw std::runtime_error("trace line " + std::to_string(lineno) +
                               ": position decreases");
    }
    raw.points.push_back(p);
  }
  if (raw.points.size() < 2) throw std::runtime_error("trace needs at least 2 rows");

  // Resample to the nominal 0.1 s cadence.
  Trace out;
  const double t0 = raw.points.front().t_s;
  const double t1 = raw.points.back().t_s;
  for (double t = t0; t <= t1 + 1e-9; t += 0.1) {
    auto p = raw.at(std::min(t, t1));
    p.t_s = t - t0;
    out.points.push_back(p);
  }
  return out;
}

traffic::SignalSchedule window_signals(const std::vector<SignalTiming>& signals,
                                       double origin_m, const traffic::TrafficParams& params,
                                       std::int64_t k0, int n_steps) {
  traffic::SignalSchedule sched;
  const double window = params.n_cells * params.cell_length;
  for (const auto& sig : signals) {
    const double local = sig.position_m - origin_m;
    if (local < 0 || local >= window) continue;
    traffic::SignalCell cell;
    cell.cell = static_cast<int>(local / params.cell_length);
    // Explicit red intervals over [k0, k0 + n_steps).
    bool in_red = false;
    std::int64_t start = 0;
    for (int k = 0; k < n_steps; ++k) {
      const bool red = sig.red_at((k0 + k) * params.dt);
      if (red && !in_red) {
        in_red = true;
        start = k0 + k;
      } else if (!red && in_red) {
        in_red = false;
        cell.red_intervals.emplace_back(start, k0 + k);
      }
    }
    if (in_red) cell.red_intervals.emplace_back(start, k0 + n_steps);
    if (!cell.red_intervals.empty()) sched.signals.push_back(cell);
  }
  return sched;
}

TrafficTracker::TrafficTracker(const traffic::TrafficParams& params,
                               const estimation::UkfConfig& ukf,
                               const std::vector<SignalTiming>& signals, double initial_origin_m)
    : params_(params), ukf_(ukf), signals_(signals) {
  origin_m_ = std::floor(initial_origin_m / params_.cell_length) * params_.cell_length;
  prior_density_ = 0.5 * params_.critical_density();
  prior_speed_ = traffic::equilibrium_speed(prior_density_, params_);
  belief_ = estimation::Belief::from_grid_state(
      traffic::uniform_equilibrium(prior_density_, params_), ukf_);
}

void TrafficTracker::advance(const std::vector<estimation::CvMeasurement>& measurements_abs) {
  const auto sched = window_signals(signals_, origin_m_, params_, k_, 1);
  belief_ = estimation::ukf_predict(belief_, sched, k_, params_, ukf_);
  ++k_;
  std::vector<estimation::CvMeasurement> local;
  local.reserve(measurements_abs.size());
  for (auto m : measurements_abs) {
    m.position_m -= origin_m_;
    local.push_back(m);
  }
  belief_ = estimation::ukf_update(belief_, local, params_, ukf_);
}

estimation::LeadPrediction TrafficTracker::predict_lead_absolute(double lead_pos_m,
                                                                 double lead_speed,
                                                                 double horizon_s) {
  reanchor(lead_pos_m);
  const int steps = static_cast<int>(std::round(horizon_s / params_.dt));
  const auto sched = window_signals(signals_, origin_m_, params_, k_, steps + 1);
  auto pred = estimation::predict_lead(belief_, lead_pos_m - origin_m_, lead_speed, sched, k_,
                                       horizon_s, params_, ukf_);
  for (auto& p : pred.position_m) p += origin_m_;
  return pred;
}

void TrafficTracker::reanchor(double lead_pos_m) {
  const double local = lead_pos_m - origin_m_;
  const int shift = static_cast<int>(std::floor(local / params_.cell_length)) - 1;
  if (shift >= 1) {
    belief_ = estimation::shift_window(belief_, shift, prior_density_, prior_speed_, ukf_);
    origin_m_ += shift * params_.cell_length;
  }
}

}  // namespace ecodrive::scenario
