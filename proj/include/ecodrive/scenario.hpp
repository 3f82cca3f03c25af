#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecodrive/state_estimation.hpp"
#include "ecodrive/traffic_flow.hpp"

namespace ecodrive::scenario {

/// Fixed-cycle signal: green during [offset, offset + green) modulo cycle.
struct SignalTiming {
  double position_m = 0.0;
  double cycle_s = 60.0;
  double green_s = 30.0;
  double offset_s = 0.0;

  bool red_at(double t) const;
  void validate() const;
};

struct TracePoint {
  double t_s = 0.0;
  double pos_m = 0.0;
  double speed_mps = 0.0;
};

/// Time-sorted trajectory of one vehicle, nominally at 0.1 s cadence.
struct Trace {
  std::vector<TracePoint> points;

  double duration_s() const { return points.empty() ? 0.0 : points.back().t_s; }
  TracePoint at(double t) const;  // linear interpolation, clamped ends
  void validate() const;
};

struct PlatoonSpec {
  int n_vehicles = 10;
  double cv_penetration = 0.5;
  double v_desire = 14.0;       // m/s
  double spawn_spacing = 15.0;  // m
  double spawn_speed = 10.0;    // m/s
  double comm_range_m = 500.0;
};

struct Scenario {
  std::string name = "two_signal";
  double road_length_m = 1800.0;
  double duration_s = 130.0;
  double trace_dt = 0.1;
  std::vector<SignalTiming> signals;
  PlatoonSpec platoon;
  std::optional<Trace> recorded_lead;  // replaces the generated platoon head

  void validate() const;
};

struct PlatoonTrace {
  std::vector<Trace> vehicles;  // index 0 = head; back() = ego's lead
  std::vector<bool> is_cv;
};

/// Constant-time-headway car-following chain behind a signal-obeying head
/// vehicle; deterministic per seed. With a recorded lead trace, the recorded
/// vehicle becomes the platoon head.
PlatoonTrace generate_lead_trace(const Scenario& sc, std::uint64_t seed);

/// Parse the scenario JSON (fields position_m, cycle_s, green_s, offset_s per
/// signal, plus platoon and episode settings).
Scenario load_scenario(const std::string& json_path);

/// Parse and validate a `t_s,pos_m,speed_mps` CSV trace: strictly increasing
/// time, non-decreasing position; resampled to 0.1 s cadence. Errors carry
/// the offending line number.
Trace ingest_trace(const std::string& csv_path);

/// Translate the absolute signal schedule into grid-cell red intervals for a
/// window starting at origin_m, over traffic steps [k0, k0 + n_steps).
traffic::SignalSchedule window_signals(const std::vector<SignalTiming>& signals,
                                       double origin_m, const traffic::TrafficParams& params,
                                       std::int64_t k0, int n_steps);

/// Rolling-window traffic state estimator: owns the belief, re-anchors the
/// 500 m grid window as the platoon advances, assimilates CV measurements
/// and produces absolute-coordinate lead predictions.
class TrafficTracker {
 public:
  TrafficTracker(const traffic::TrafficParams& params, const estimation::UkfConfig& ukf,
                 const std::vector<SignalTiming>& signals, double initial_origin_m);

  /// One traffic step: predict, then update with absolute-position reports.
  void advance(const std::vector<estimation::CvMeasurement>& measurements_abs);

  /// Deterministic forward prediction of the lead from its sensed state.
  estimation::LeadPrediction predict_lead_absolute(double lead_pos_m, double lead_speed,
                                                   double horizon_s);

  /// Shift the window so the given position sits near the upstream edge.
  void reanchor(double lead_pos_m);

  double origin_m() const { return origin_m_; }
  std::int64_t step() const { return k_; }
  const estimation::Belief& belief() const { return belief_; }

 private:
  traffic::TrafficParams params_;
  estimation::UkfConfig ukf_;
  std::vector<SignalTiming> signals_;
  double origin_m_;
  std::int64_t k_ = 0;
  estimation::Belief belief_;
  double prior_density_;
  double prior_speed_;
};

}  // namespace ecodrive::scenario
