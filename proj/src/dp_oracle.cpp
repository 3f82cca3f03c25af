#include "ecodrive/dp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

namespace ecodrive::dp {

namespace {

struct NodeVal {
  double cost = std::numeric_limits<double>::infinity();
  std::int64_t parent = -1;
  float tm = 0.0f;
  float fb = 0.0f;
  std::int8_t gear = 0;
};

// Key layout: v index (16 bits) | previous speed-change index + 128 (8 bits)
// | position lattice index (32 bits). The accel chain byte stays zero unless
// jerk is enforced, merging equivalent states.
std::int64_t pack(int v_idx, int adv, int d_idx) {
  return (static_cast<std::int64_t>(v_idx) << 40) |
         (static_cast<std::int64_t>(adv + 128) << 32) | static_cast<std::uint32_t>(d_idx);
}
int unpack_v(std::int64_t key) { return static_cast<int>(key >> 40); }
int unpack_adv(std::int64_t key) { return static_cast<int>((key >> 32) & 0xff) - 128; }
int unpack_d(std::int64_t key) { return static_cast<int>(static_cast<std::uint32_t>(key & 0xffffffff)); }

struct StageCost {
  bool feasible = false;
  double cost = 0.0;   // w1 * pb * dt + w2 * a^2 * dt
  double tm = 0.0, fb = 0.0, pb = 0.0;
  int gear = 1;
};

}  // namespace

DpResult dp_solve(const mip::CycleInput& input, const mip::Weights& weights,
                  const powertrain::PlantConfig& plant, const DpGrid& grid,
                  bool use_polynomial) {
  const double dt = grid.dt;
  const int n = input.n_steps;
  if (n > grid.max_steps) throw std::invalid_argument("dp horizon exceeds the tractability guard");
  if (input.lead.horizon_s() + 1e-9 < n * dt) {
    throw std::invalid_argument("lead prediction shorter than the horizon");
  }
  const auto& vp = plant.vehicle;
  const auto& motor = plant.motor;
  const auto& gears = plant.gears;
  const double dv = grid.speed_step;
  const double dd = dt * dv;  // exact position lattice
  const double f_phi = vp.road_load(input.state.position_m);
  const double d0 = input.state.position_m;

  const int v0_idx = static_cast<int>(std::lround(input.state.speed_mps / dv));
  const int v_idx_max = static_cast<int>(std::floor(vp.v_lim / dv + 1e-9));

  // Reachable speed-change window per step, on the grid.
  const int dv_lo = static_cast<int>(std::ceil(vp.a_min * dt / dv - 1e-9));
  const int dv_hi = static_cast<int>(std::floor(vp.a_max * dt / dv + 1e-9));

  const double d_z = input.lead.position_at(n * dt) - 2.0 * vp.h_min * input.lead.speed_at(n * dt);
  std::vector<double> lead_pos(n + 1), lead_sig(n + 1);
  for (int k = 0; k <= n; ++k) {
    lead_pos[k] = input.lead.position_at(k * dt);
    lead_sig[k] = input.lead.sigma_at(k * dt);
  }

  const double pb_lo = input.pb_min, pb_hi = input.pb_max;

  // Stage cost depends on (v, v') only; memoized across (k, d).
  std::unordered_map<std::int64_t, StageCost> memo;
  auto stage_cost = [&](int v_idx, int v_next_idx) -> const StageCost& {
    const std::int64_t key = pack(v_idx, 0, v_next_idx);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    StageCost sc;
    const double v = v_idx * dv;
    const double a = (v_next_idx - v_idx) * dv / dt;
    const double f_req = vp.mass_kg * a + f_phi + vp.drag_coeff * v * v;
    double best_pb = std::numeric_limits<double>::infinity();
    for (int g = 0; g < gears.gear_count(); ++g) {
      const double r = gears.ratios[g];
      const double wm = r * v;
      if (wm > motor.speed_max + 1e-9) continue;
      const double t_cap = motor.torque_max_at(wm);
      double t_lo = std::max(-t_cap, vp.mass_kg * vp.a_reg / r);
      if (v <= vp.v_lscp) t_lo = std::max(t_lo, 0.0);
      const double t_hi = t_cap;
      const double t_need = f_req / r;
      if (t_need > t_hi + 1e-9) continue;
      const double tm = std::max(t_need, t_lo);
      const double fb = std::max(0.0, tm * r - f_req);
      if (fb > vp.brake_force_max + 1e-9) continue;
      double p_drv;
      if (use_polynomial) {
        p_drv = motor.p00 + motor.p10 * wm + motor.p01 * tm + motor.p11 * wm * tm;
      } else {
        p_drv = powertrain::drive_power_exact(tm, wm, motor);
      }
      const double pb = plant.battery.p_aux + p_drv / gears.efficiency;
      if (pb < pb_lo - 1e-6 || pb > pb_hi + 1e-6) continue;
      if (pb < best_pb) {
        best_pb = pb;
        sc.feasible = true;
        sc.tm = tm;
        sc.fb = fb;
        sc.pb = pb;
        sc.gear = g + 1;
      }
    }
    if (sc.feasible) sc.cost = dt * (weights.w1 * sc.pb + weights.w2 * a * a);
    return memo.emplace(key, sc).first->second;
  };

  auto corridor_ok = [&](int k, double d, double v) {
    const double guard = weights.beta * lead_sig[k];
    if (d < lead_pos[k] + guard - vp.d_max - 1e-9) return false;
    if (d > lead_pos[k] - guard - vp.d_min - vp.h_min * v + 1e-9) return false;
    return true;
  };

  const int adv0 = grid.enforce_jerk
                       ? std::clamp(static_cast<int>(std::lround(input.state.prev_accel * dt / dv)),
                                    -127, 127)
                       : 0;
  using Stage = std::unordered_map<std::int64_t, NodeVal>;
  std::vector<Stage> stages(n + 1);
  stages[0][pack(v0_idx, adv0, 0)] = NodeVal{0.0, -1, 0.0f, 0.0f, 0};

  DpResult res;
  for (int k = 0; k < n; ++k) {
    // Deterministic expansion order.
    std::vector<std::int64_t> keys;
    keys.reserve(stages[k].size());
    for (const auto& [key, val] : stages[k]) keys.push_back(key);
    std::sort(keys.begin(), keys.end());

    for (std::int64_t key : keys) {
      const NodeVal& node = stages[k][key];
      const int v_idx = unpack_v(key);
      const int d_idx = unpack_d(key);
      const int adv_prev = unpack_adv(key);
      for (int dvi = dv_lo; dvi <= dv_hi; ++dvi) {
        const int v_next = v_idx + dvi;
        if (v_next < 0 || v_next > v_idx_max) continue;
        if (grid.enforce_jerk) {
          const double jerk = (dvi - adv_prev) * dv / (dt * dt);
          if (jerk < vp.j_min - 1e-9 || jerk > vp.j_max + 1e-9) continue;
        }
        const StageCost& sc = stage_cost(v_idx, v_next);
        if (!sc.feasible) continue;
        const int d_next = d_idx + v_idx;  // position advances by v * dt = v_idx * dd
        const double d_abs = d0 + d_next * dd;
        const double v_next_val = v_next * dv;
        if (!corridor_ok(k + 1, d_abs, v_next_val)) continue;
        const double cost = node.cost + sc.cost;
        auto& slot = stages[k + 1][pack(v_next, grid.enforce_jerk ? dvi : 0, d_next)];
        if (cost < slot.cost) {
          slot.cost = cost;
          slot.parent = key;
          slot.tm = static_cast<float>(sc.tm);
          slot.fb = static_cast<float>(sc.fb);
          slot.gear = static_cast<std::int8_t>(sc.gear);
        }
      }
      ++res.states_expanded;
    }
  }

  // Terminal selection.
  double best = std::numeric_limits<double>::infinity();
  std::int64_t best_key = -1;
  std::vector<std::int64_t> fkeys;
  for (const auto& [key, val] : stages[n]) fkeys.push_back(key);
  std::sort(fkeys.begin(), fkeys.end());
  for (std::int64_t key : fkeys) {
    const double d_abs = d0 + unpack_d(key) * dd;
    const double e = d_abs - d_z;
    const double total = stages[n][key].cost + weights.w0 * e * e;
    if (total < best) {
      best = total;
      best_key = key;
    }
  }
  if (best_key < 0) {
    res.status = DpStatus::kInfeasible;
    return res;
  }

  // Backtrack.
  std::vector<std::int64_t> path(n + 1);
  path[n] = best_key;
  for (int k = n; k > 0; --k) path[k - 1] = stages[k][path[k]].parent;

  auto& t = res.trajectory;
  t.v.resize(n + 1);
  t.d.resize(n + 1);
  t.a.assign(n, 0.0);
  t.tm.assign(n, 0.0);
  t.wm.assign(n, 0.0);
  t.fb.assign(n, 0.0);
  t.pm.assign(n, 0.0);
  t.pb.assign(n, 0.0);
  t.gear.assign(n, 1);
  t.s_max.assign(n, 0.0);
  t.s_min.assign(n, 0.0);
  for (int k = 0; k <= n; ++k) {
    t.v[k] = unpack_v(path[k]) * dv;
    t.d[k] = d0 + unpack_d(path[k]) * dd;
  }
  res.soc.assign(n + 1, input.state.soc);
  for (int k = 0; k < n; ++k) {
    const NodeVal& node = stages[k + 1][path[k + 1]];
    t.gear[k] = node.gear;
    t.tm[k] = node.tm;
    t.fb[k] = node.fb;
    t.a[k] = (t.v[k + 1] - t.v[k]) / dt;
    const double r = gears.ratios[node.gear - 1];
    t.wm[k] = r * t.v[k];
    t.pm[k] = t.wm[k] * t.tm[k];
    double p_drv;
    if (use_polynomial) {
      p_drv = motor.p00 + motor.p10 * t.wm[k] + motor.p01 * t.tm[k] + motor.p11 * t.pm[k];
    } else {
      p_drv = powertrain::drive_power_exact(t.tm[k], t.wm[k], motor);
    }
    t.pb[k] = plant.battery.p_aux + p_drv / gears.efficiency;
    const double i_b = powertrain::current_from_power(t.pb[k], res.soc[k], plant.battery);
    res.soc[k + 1] = res.soc[k] - i_b * dt / plant.battery.capacity_As;
  }

  res.status = DpStatus::kOptimal;
  res.objective = best;
  return res;
}

}  // namespace ecodrive::dp
