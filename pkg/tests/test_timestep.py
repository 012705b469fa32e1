import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flockfv.control import ControlLaw, UbarPreset
from flockfv.grid import State, init_preset, make_grid, total_mass
from flockfv.kernel import KernelSpec
from flockfv.scheme import SchemeConfig
from flockfv.timestep import (SSP2, BlowupPolicy, imex_step, run, select_dt, stiff_relaxation_solve)

CS = KernelSpec()
CFG = SchemeConfig()


def test_tableau_constants():
    assert SSP2.beta == pytest.approx(0.2928932188134524, abs=1e-15)
    for tab in (SSP2.explicit, SSP2.implicit):
        assert sum(tab["b"]) == 1.0
        for c, row in zip(tab["c"], tab["A"]):
            assert c == pytest.approx(sum(row))


def test_relaxation_solve_examples():
    np.testing.assert_array_equal(stiff_relaxation_solve(np.array([0.3]), np.array([1.0]), 2.0, 0.0), [0.3])
    np.testing.assert_allclose(stiff_relaxation_solve(np.array([0.0]), np.array([2.0]), 1.0, 1.0), [1.0])
    big = stiff_relaxation_solve(np.array([5.0]), np.array([-1.0]), 1e-300, 1.0)
    np.testing.assert_allclose(big, [-1.0])
    np.testing.assert_array_equal(stiff_relaxation_solve(np.array([0.3]), np.array([1.0]), math.inf, 1.0), [0.3])


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(1e-4, 1e4), st.floats(0, 1e3))
def test_relaxation_solve_is_convex_average(u_exp, ubar, gamma, coef):
    u = float(stiff_relaxation_solve(np.array([u_exp]), np.array([ubar]), gamma, coef)[0])
    lo, hi = min(u_exp, ubar), max(u_exp, ubar)
    assert lo - 1e-12 <= u <= hi + 1e-12
    # it solves the implicit equation
    assert u == pytest.approx(u_exp + coef / gamma * (ubar - u), abs=1e-9 * (1 + abs(u_exp) + abs(ubar)))


def test_trivial_state_is_stationary():
    g = make_grid(2, 1.0, 8)
    s = init_preset(g, "constant", rho=1.0, u=(0.5, -0.25))
    out = imex_step(s, CS, ControlLaw.off(), CFG, 0.01).state
    np.testing.assert_array_equal(out.stacked(), s.stacked())
    assert out.t == 0.01


def _pure_relaxation(dt, gamma=0.5, T=1.0):
    g = make_grid(1, 1.0, 8)
    s = State(g, np.zeros(8), np.full(8, 1.0))
    law = ControlLaw(gamma, UbarPreset("constant", (0.0,)))
    for _ in range(int(round(T / dt))):
        s = imex_step(s, CS, law, CFG, dt).state
    return abs(s.u[0, 0] - math.exp(-T / gamma))


def test_pure_relaxation_second_order():
    errs = [_pure_relaxation(dt) for dt in (0.1, 0.05, 0.025, 0.0125)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates.min() > 1.9


@pytest.mark.parametrize("limiter", ["minmod", "none"])
def test_time_order_on_smooth_problem(limiter):
    # fixed grid, dt in [2e-4, 1.6e-3]: consecutive-difference rates
    g = make_grid(1, 1.0, 100)
    s0 = init_preset(g, "smooth_1d")
    law = ControlLaw(1.0, UbarPreset("constant", (0.0,)))
    cfg = SchemeConfig(limiter=limiter)
    finals = []
    for dt in (1.6e-3, 8e-4, 4e-4, 2e-4):
        s = s0
        for _ in range(int(round(0.2 / dt))):
            s = imex_step(s, CS, law, cfg, dt).state
        finals.append(s.stacked())
    errs = [np.abs(a - b).max() for a, b in zip(finals[:-1], finals[1:])]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert rates.min() >= 1.8


def test_select_dt_examples():
    g = make_grid(1, 1.0, 200)
    s = State(g, np.ones(200), np.linspace(-1, 1, 200))
    assert select_dt(s, CFG) == pytest.approx(0.0095)
    rest = State(g, np.ones(200), np.zeros(200))
    assert select_dt(rest, CFG) == pytest.approx(0.95 * 0.01)
    assert select_dt(s, CFG, remaining=0.001) == 0.001


def test_zero_horizon_returns_initial_snapshot():
    s = init_preset(make_grid(1, 1.0, 20), "two_blocks")
    res = run(s, CS, ControlLaw.off(), CFG, 0.0)
    assert res.steps == 0 and len(res.snapshots) == 1 and res.snapshots[0] is s


def test_run_hits_output_times_exactly():
    s = init_preset(make_grid(1, 1.0, 50), "two_blocks")
    res = run(s, CS, ControlLaw.off(), CFG, 0.5, [0.1, 0.25], diagnostics_every=0)
    assert [snap.t for snap in res.snapshots] == [0.0, 0.1, 0.25, 0.5]


def test_cfl_respected_every_step():
    s = init_preset(make_grid(1, 1.0, 100), "two_blocks")
    seen = []
    run(s, CS, ControlLaw.off(), CFG, 1.0, observer=lambda prev, r: seen.append(
        (r.dt, float(np.abs(prev.u).max()))), diagnostics_every=0)
    h = 0.02
    for dt, umax in seen:
        assert dt * umax <= 0.95 * h * (1 + 1e-12)
        assert dt <= 0.95 * h * (1 + 1e-12)


def test_mass_conserved_tightly():
    s = init_preset(make_grid(2, 1.0, 32), "asymmetric_heaps")
    res = run(s, CS, ControlLaw(1.0, UbarPreset("constant", (0.0, 0.0))), SchemeConfig(convolution="fft"),
              0.5, diagnostics_every=0)
    m0, m1 = total_mass(s), total_mass(res.final_state)
    assert abs(m1 - m0) / m0 <= 1e-12 * 0.5


def test_stiff_control_keeps_convex_bound():
    s = init_preset(make_grid(1, 1.0, 100), "two_blocks")
    law = ControlLaw(1e-3, UbarPreset("constant", (0.5,)))
    bound = max(np.abs(s.u).max(), 0.5)
    worst = []
    run(s, CS, law, CFG, 0.5, observer=lambda prev, r: worst.append(np.abs(r.state.u).max()),
        diagnostics_every=0)
    assert max(worst) <= bound + 1e-10


def test_blowup_policy_stops_with_last_finite_state():
    s = init_preset(make_grid(1, 1.0, 100), "two_blocks")
    res = run(s, CS, ControlLaw.off(), CFG, 3.0, policy=BlowupPolicy(density_factor=5.0), diagnostics_every=0)
    assert not res.completed
    rep = res.divergence
    assert rep.quantity == "max_rho" and rep.value > rep.threshold == 5.0
    assert rep.last_finite_state.rho.max() <= 5.0 and rep.last_finite_state.t < rep.time
    assert res.final_state is rep.last_finite_state


def test_blowup_policy_record_keeps_going():
    s = init_preset(make_grid(1, 1.0, 100), "two_blocks")
    res = run(s, CS, ControlLaw.off(), CFG, 1.0, policy=BlowupPolicy(density_factor=5.0, action="record"),
              diagnostics_every=0)
    assert res.divergence is not None and res.final_state.t == 1.0


def test_diagnostics_rows():
    s = init_preset(make_grid(1, 1.0, 40), "two_blocks")
    rows = []
    res = run(s, CS, ControlLaw.off(), CFG, 0.2, on_row=rows.append)
    assert rows == res.diagnostics and len(rows) == res.steps + 1
    assert set(rows[0]) >= {"t", "mass", "momentum_1", "kinetic_energy", "alignment_dissipation", "S", "V",
                            "max_speed", "min_rho", "max_rho", "dt"}
    assert all(r["alignment_dissipation"] >= 0 for r in rows)


def test_rejects_bad_inputs():
    s = init_preset(make_grid(1, 1.0, 8), "two_blocks")
    with pytest.raises(ValueError):
        imex_step(s, CS, ControlLaw.off(), CFG, 0.0)
    with pytest.raises(ValueError):
        BlowupPolicy(action="ignore")
