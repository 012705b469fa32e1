"""Second-order SSP IMEX Runge-Kutta time stepping.

The explicit Heun tableau advances the non-stiff part F (fluxes and alignment),
the L-stable two-stage DIRK tableau advances the control relaxation
R = u_bar - u.  Because R is linear and pointwise, every implicit stage is a
closed-form convex average of the explicit predictor and u_bar.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlLaw, ubar_field
from .grid import State, kinetic_energy, total_mass, total_momentum
from .kernel import KernelSpec, alignment_dissipation, get_convolver
from .scheme import SchemeConfig, nonstiff_rhs

log = logging.getLogger(__name__)

SPEED_FLOOR = 1e-12


@dataclass(frozen=True)
class ImexTableau:
    beta: float = 1.0 - 1.0 / math.sqrt(2.0)

    @property
    def explicit(self):
        return {"c": (0.0, 1.0), "A": ((0.0, 0.0), (1.0, 0.0)), "b": (0.5, 0.5)}

    @property
    def implicit(self):
        g = self.beta
        return {"c": (g, 1.0 - g), "A": ((g, 0.0), (1.0 - 2.0 * g, g)), "b": (0.5, 0.5)}


SSP2 = ImexTableau()


def stiff_relaxation_solve(u_exp, ubar, gamma: float, coefficient: float):
    """Solve u = u_exp + (coefficient / gamma) (ubar - u) for u."""
    if math.isinf(gamma) or coefficient == 0:
        return np.array(u_exp, dtype=float, copy=True)
    k = coefficient / gamma
    if math.isinf(k):
        return np.broadcast_to(ubar, np.shape(u_exp)).astype(float)
    return (u_exp + k * ubar) / (1.0 + k)


@dataclass
class StepResult:
    state: State
    dt: float
    max_speed: float
    max_divergence: float
    min_rho: float
    max_rho: float
    finite: bool = True


def velocity_divergence(state: State) -> np.ndarray:
    """Centered-difference div u on the periodic grid."""
    div = np.zeros(state.grid.shape)
    for k, h in enumerate(state.grid.spacing):
        axis = -1 - k
        uk = state.u[k]
        div += (np.roll(uk, -1, axis=axis) - np.roll(uk, 1, axis=axis)) / (2 * h)
    return div


def max_one_sided_gradient(state: State) -> float:
    g = 0.0
    for k, h in enumerate(state.grid.spacing):
        for c in range(state.grid.dim):
            diff = np.roll(state.u[c], -1, axis=-1 - k) - state.u[c]
            g = max(g, float(np.abs(diff).max()) / h)
    return g


def imex_step(state: State, kernel: KernelSpec, law: ControlLaw, config: SchemeConfig,
              dt: float, tableau: ImexTableau = SSP2) -> StepResult:
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    conv = get_convolver(grid, kernel, config.convolution)
    ubar = None if law.uncontrolled else ubar_field(grid, law.ubar)
    gamma = law.gamma
    g = tableau.beta
    wn = state.stacked()

    def relax(w):
        # R(w) / gamma for the velocity rows
        if ubar is None:
            return np.zeros_like(w[1:])
        return (ubar - w[1:]) / gamma

    w1 = wn.copy()
    w1[1:] = stiff_relaxation_solve(wn[1:], ubar, gamma, dt * g)
    f1, info1 = nonstiff_rhs(w1, grid, conv, config)
    r1 = relax(w1)

    w2 = wn + dt * f1
    w2[1:] += dt * (1.0 - 2.0 * g) * r1
    w2[1:] = stiff_relaxation_solve(w2[1:], ubar, gamma, dt * g)
    f2, info2 = nonstiff_rhs(w2, grid, conv, config)
    r2 = relax(w2)

    w = wn + 0.5 * dt * (f1 + f2)
    w[1:] += 0.5 * dt * (r1 + r2)

    finite = bool(info1["finite"] and info2["finite"] and np.isfinite(w).all())
    new = State.from_stacked(grid, w, state.t + dt)
    return StepResult(
        state=new,
        dt=dt,
        max_speed=max(info1["max_speed"], info2["max_speed"]),
        max_divergence=float(np.abs(velocity_divergence(new)).max()) if finite else math.inf,
        min_rho=float(w[0].min()),
        max_rho=float(w[0].max()),
        finite=finite,
    )


def select_dt(state: State, config: SchemeConfig, remaining: float | None = None) -> float:
    """CFL step: cfl * min(h) / max|u|, capped at the speed-1 step cfl * min(h)."""
    h = min(state.grid.spacing)
    speed = max(float(np.abs(state.u).max()), SPEED_FLOOR)
    dt = min(config.cfl * h / speed, config.cfl * h)
    if remaining is not None and remaining < dt:
        dt = remaining
    return dt


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlowupPolicy:
    """Ceilings that flag numerical blow-up; ``None`` disables a check.

    ``action`` is ``"stop"`` (end the run at the first trigger) or
    ``"record"`` (report the first trigger and keep integrating).
    """

    gradient_factor: float | None = 1e3
    density_factor: float | None = 1e3
    action: str = "stop"

    def __post_init__(self):
        if self.action not in ("stop", "record"):
            raise ValueError(f"blow-up action must be 'stop' or 'record', got {self.action!r}")


@dataclass
class DivergenceReport:
    time: float
    quantity: str
    value: float
    threshold: float
    location: tuple
    last_finite_state: State | None = None

    def as_dict(self) -> dict:
        return {"time": self.time, "quantity": self.quantity, "value": self.value,
                "threshold": self.threshold, "location": list(self.location)}


@dataclass
class RunResult:
    snapshots: list[State]
    diagnostics: list[dict]
    divergence: DivergenceReport | None = None
    steps: int = 0
    final_state: State | None = None

    @property
    def completed(self) -> bool:
        return self.divergence is None


def support_mask(state: State, rho_floor: float) -> np.ndarray:
    return state.rho > rho_floor


def diagnostics_row(state: State, kernel: KernelSpec, config: SchemeConfig, rho_floor: float,
                    dt: float = 0.0) -> dict:
    from .thresholds import support_diagnostics

    conv = get_convolver(state.grid, kernel, config.convolution)
    S, V = support_diagnostics(state, rho_floor)
    row = {"t": state.t, "mass": total_mass(state)}
    for k, p in enumerate(total_momentum(state)):
        row[f"momentum_{k + 1}"] = float(p)
    row.update(
        kinetic_energy=kinetic_energy(state),
        alignment_dissipation=alignment_dissipation(state, kernel, conv),
        S=S,
        V=V,
        max_speed=float(np.sqrt((state.u**2).sum(axis=0)).max()),
        min_rho=float(state.rho.min()),
        max_rho=float(state.rho.max()),
        dt=dt,
    )
    return row


def _check_blowup(result: StepResult, policy: BlowupPolicy, rho0_max: float):
    state = result.state
    grid = state.grid
    if not result.finite:
        return "non-finite", math.nan, math.nan, ()
    if policy.density_factor is not None and rho0_max > 0:
        limit = policy.density_factor * rho0_max
        if result.max_rho > limit:
            loc = np.unravel_index(int(np.argmax(state.rho)), grid.shape)[::-1]
            return "max_rho", result.max_rho, limit, tuple(int(i) for i in loc)
    if policy.gradient_factor is not None:
        limit = policy.gradient_factor / min(grid.spacing)
        grad = max_one_sided_gradient(state)
        if grad > limit:
            return "max_grad_u", grad, limit, ()
    return None


def run(initial: State, kernel: KernelSpec, law: ControlLaw, config: SchemeConfig,
        t_final: float, output_times=(), *, policy: BlowupPolicy = BlowupPolicy(),
        diagnostics_every: int = 1, rho_floor_rel: float = 1e-8, observer=None,
        on_row=None, on_snapshot=None, max_steps: int = 10_000_000) -> RunResult:
    """Integrate to ``t_final`` landing exactly on each output time.

    Snapshots are taken at t = 0 and at every requested output time.
    ``observer(previous_state, step_result)`` is called after each accepted
    step; ``on_row(row)`` and ``on_snapshot(state)`` see every diagnostics row
    and snapshot as soon as it exists, which lets callers stream to disk.
    """
    def add_row(row):
        diagnostics.append(row)
        if on_row is not None:
            on_row(row)

    def add_snapshot(snap):
        snapshots.append(snap)
        if on_snapshot is not None:
            on_snapshot(snap)

    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    outputs = sorted(float(t) for t in output_times if 0 < t <= t_final)
    if t_final > 0 and (not outputs or outputs[-1] < t_final):
        outputs.append(float(t_final))
    rho0_max = float(initial.rho.max())
    rho_floor = rho_floor_rel * rho0_max

    state = initial
    snapshots = []
    diagnostics = []
    add_snapshot(initial)
    if diagnostics_every:
        add_row(diagnostics_row(initial, kernel, config, rho_floor))
    divergence = None
    steps = 0
    for target in outputs:
        while state.t < target:
            remaining = target - state.t
            dt = select_dt(state, config, remaining)
            result = imex_step(state, kernel, law, config, dt)
            steps += 1
            if observer is not None:
                observer(state, result)
            trigger = _check_blowup(result, policy, rho0_max)
            if trigger is not None and divergence is None:
                quantity, value, threshold, loc = trigger
                divergence = DivergenceReport(result.state.t, quantity, value, threshold, loc, state)
                log.info("blow-up flagged at t=%.6g: %s=%.6g", result.state.t, quantity, value)
            if trigger is not None and (policy.action == "stop" or not result.finite):
                return RunResult(snapshots, diagnostics, divergence, steps, state)
            state = result.state
            # absorb round-off so the output time is hit exactly
            if target - state.t < 1e-12 * max(1.0, target):
                state = State(state.grid, state.rho, state.u, target)
            if diagnostics_every and (steps % diagnostics_every == 0 or state.t >= target):
                add_row(diagnostics_row(state, kernel, config, rho_floor, dt))
            if steps >= max_steps:
                raise RuntimeError(f"step limit {max_steps} reached at t={state.t}")
        add_snapshot(state)
    return RunResult(snapshots, diagnostics, divergence, steps, state)
