import math

import _ecodrive as eco


def test_equilibrium_speed_branches():
    p = eco.TrafficParams()
    assert eco.equilibrium_speed(0.0, p) == p.free_flow_speed
    assert eco.equilibrium_speed(p.jam_density, p) == 0.0
    rho_c = p.critical_density()
    assert abs(eco.equilibrium_speed(rho_c, p) - p.free_flow_speed) < 1e-9


def test_uniform_equilibrium_is_stationary():
    p = eco.TrafficParams()
    s = eco.uniform_equilibrium(0.05, p)
    s2 = eco.traffic_step(s, p)
    assert max(abs(a - b) for a, b in zip(s.speed, s2.speed)) == 0.0
    assert max(abs(a - b) for a, b in zip(s.density, s2.density)) == 0.0


def test_battery_round_trip():
    b = eco.default_bundle()
    p = eco.battery_power(120.0, 0.6, b)
    i = eco.current_from_power(p, 0.6, b)
    assert abs(i - 120.0) < 1e-6


def test_drive_power_signs():
    b = eco.default_bundle()
    mm = b.motor_map
    assert eco.drive_power_exact(0.0, 300.0, mm) == 0.0
    assert eco.drive_power_exact(50.0, 300.0, mm) > 300.0 * 50.0
    assert eco.drive_power_exact(-50.0, 300.0, mm) > 300.0 * -50.0


def test_gear_design_audit():
    b = eco.default_bundle()
    for variant in ("three", "single"):
        rep = eco.check_gear_design(b, variant)
        assert rep.pass_
        assert rep.uphill_margin > 0
        assert rep.top_speed_margin > 0


def test_small_mip_solve():
    spec = eco.ProblemSpec()
    a = spec.add_binary("a", -5.0)
    bvar = spec.add_binary("b", -4.0)
    spec.add_row("cap", -math.inf, 1.0, [(a, 1.0), (bvar, 1.0)])
    res = eco.solve_mip(spec)
    assert res.has_incumbent
    assert abs(res.objective + 5.0) < 1e-9


def test_problemspec_round_trip():
    spec = eco.ProblemSpec()
    x = spec.add_var("x", 0.0, 2.5, 1.0)
    spec.add_row("r", 1.0, math.inf, [(x, 1.0)])
    text = spec.serialize()
    again = eco.ProblemSpec.parse(text)
    assert again.serialize() == text


def test_short_episode_runs():
    out = eco.run_episode(seed=3, variant="three", duration_s=12.0)
    assert out["completed"]
    assert out["distance_m"] > 0
