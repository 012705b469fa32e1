"""Critical-threshold analysis for the controlled alignment system.

Along a characteristic, with v = div u and d = v + psi*rho + 1/gamma,

    rho' = -rho v,        d' = -d (d - psi*rho - 1/gamma)     (1D)

so beta = d / rho is conserved and the sign of d0 decides blow-up.  In 2D only
sufficient conditions are available; both are evaluated pointwise over the
initial support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial import ConvexHull, QhullError

from .control import ControlLaw
from .grid import State, total_mass
from .kernel import KernelSpec, convolve_psi_rho, psi

BLOWUP_MAGNITUDE = 1e8


# ---------------------------------------------------------------------------
# support diameters
# ---------------------------------------------------------------------------


def point_set_diameter(points: np.ndarray) -> float:
    """Largest pairwise Euclidean distance in an (m, k) point cloud."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    pts = np.unique(points, axis=0)
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            # collinear cloud: the diameter is spanned by the extreme points
            # along the principal direction
            centered = pts - pts.mean(axis=0)
            direction = np.linalg.svd(centered, full_matrices=False)[2][0]
            proj = centered @ direction
            pts = pts[[int(np.argmin(proj)), int(np.argmax(proj))]]
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=-1)).max())


def unwrap_periodic(coords: np.ndarray, L: float) -> np.ndarray:
    """Shift periodic coordinates so no occupied run straddles the cut.

    Per axis the box is cut in the middle of the widest empty gap between
    occupied coordinates, which makes a set that has drifted across the
    boundary contiguous again.  Sets with no gap wider than the spacing stay
    as they are.
    """
    out = np.array(coords, dtype=float, copy=True)
    for k in range(out.shape[1]):
        vals = np.unique(out[:, k])
        if len(vals) < 2:
            continue
        gaps = np.diff(np.append(vals, vals[0] + 2 * L))
        widest = int(np.argmax(gaps))
        if widest == len(vals) - 1:
            continue  # the widest gap already contains the cut
        cut = vals[widest]
        out[:, k] = np.where(out[:, k] > cut, out[:, k] - 2 * L, out[:, k])
    return out


def support_diagnostics(state: State, rho_floor: float = 0.0) -> tuple[float, float]:
    """(S, V): diameters of supp(rho) and of the velocities on it.

    The support is the set of cells whose density exceeds ``rho_floor``.
    Cell centers are unwrapped across the periodic boundary first, so a flock
    that translates through the box keeps its diameter.
    """
    mask = state.rho > rho_floor
    if not mask.any():
        return 0.0, 0.0
    coords = np.stack([c[mask] for c in state.grid.mesh()], axis=1)
    vels = np.stack([uk[mask] for uk in state.u], axis=1)
    return point_set_diameter(unwrap_periodic(coords, state.grid.L)), point_set_diameter(vels)


def periodic_gradient(field: np.ndarray, grid, axis: int) -> np.ndarray:
    """Second-order centered difference along physical ``axis``."""
    a = -1 - axis
    h = grid.spacing[axis]
    return (np.roll(field, -1, axis=a) - np.roll(field, 1, axis=a)) / (2 * h)


# ---------------------------------------------------------------------------
# one dimension
# ---------------------------------------------------------------------------


@dataclass
class ThresholdReport1D:
    dudx: np.ndarray
    psi_rho: np.ndarray
    margin: np.ndarray
    classification: str
    min_margin: float
    min_location: float
    inv_gamma: float
    blowup_time_bound: float | None = None

    def summary(self) -> dict:
        return {
            "dim": 1,
            "classification": self.classification,
            "min_margin": self.min_margin,
            "min_location": self.min_location,
            "inv_gamma": self.inv_gamma,
            "blowup_time_bound": self.blowup_time_bound,
        }


def classify_1d(state: State, kernel: KernelSpec, law: ControlLaw, tol: float = 0.0) -> ThresholdReport1D:
    """Sharp 1D test: subcritical iff du0/dx + psi*rho0 + 1/gamma >= 0 everywhere."""
    if state.grid.dim != 1:
        raise ValueError("classify_1d needs a 1D state")
    dudx = periodic_gradient(state.u[0], state.grid, 0)
    conv = convolve_psi_rho(state, kernel)
    margin = dudx + conv + law.inv_gamma
    k = int(np.argmin(margin))
    m = float(margin[k])
    sub = m >= -tol
    return ThresholdReport1D(
        dudx=dudx,
        psi_rho=conv,
        margin=margin,
        classification="subcritical" if sub else "supercritical",
        min_margin=m,
        min_location=float(state.grid.centers(0)[k]),
        inv_gamma=law.inv_gamma,
        # d' <= -d^2 once d < 0, so d reaches -inf no later than -1/d0
        blowup_time_bound=None if sub else -1.0 / m,
    )


@dataclass
class CharacteristicSolution:
    t: np.ndarray
    rho: np.ndarray
    d: np.ndarray
    blowup_time: float | None

    @property
    def beta(self) -> np.ndarray:
        return self.d / self.rho


def characteristic_ode_oracle(rho0: float, d0: float, psi_conv, gamma: float, t_final: float,
                              rtol: float = 1e-10, atol: float = 1e-14,
                              dense_times=None) -> CharacteristicSolution:
    """Integrate (rho, d) along one characteristic with psi*rho prescribed.

    ``psi_conv`` is a constant or a callable of t.  Blow-up is reported when
    |d| first exceeds 1e8.
    """
    inv_gamma = 0.0 if math.isinf(gamma) else 1.0 / gamma
    c = psi_conv if callable(psi_conv) else (lambda t, _c=float(psi_conv): _c)

    def rhs(t, y):
        rho, d = y
        base = c(t) + inv_gamma
        v = d - base
        return [-rho * v, -d * (d - base)]

    def hit(t, y):
        return abs(y[1]) - BLOWUP_MAGNITUDE

    hit.terminal = True
    hit.direction = 1
    sol = solve_ivp(rhs, (0.0, t_final), [rho0, d0], method="DOP853", rtol=rtol, atol=atol,
                    events=hit, t_eval=dense_times)
    blowup = float(sol.t_events[0][0]) if len(sol.t_events[0]) else None
    return CharacteristicSolution(sol.t, sol.y[0], sol.y[1], blowup)


@dataclass
class CharacteristicTrack:
    """Values sampled along a particle path of a PDE run."""

    t: list = field(default_factory=list)
    x: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    d: list = field(default_factory=list)
    truncated: bool = False

    @property
    def beta(self) -> np.ndarray:
        return np.asarray(self.d) / np.asarray(self.rho)


def _periodic_interp(x: float, centers: np.ndarray, values: np.ndarray, L: float) -> float:
    xs = np.concatenate([centers[-1:] - 2 * L, centers, centers[:1] + 2 * L])
    vs = np.concatenate([values[-1:], values, values[:1]])
    x = (x + L) % (2 * L) - L
    return float(np.interp(x, xs, vs))


def sample_characteristic(state: State, kernel: KernelSpec, law: ControlLaw, x: float):
    """(rho, d, u) interpolated at position x of a 1D state."""
    grid = state.grid
    xc = grid.centers(0)
    d_field = periodic_gradient(state.u[0], grid, 0) + convolve_psi_rho(state, kernel) + law.inv_gamma
    return (_periodic_interp(x, xc, state.rho, grid.L),
            _periodic_interp(x, xc, d_field, grid.L),
            _periodic_interp(x, xc, state.u[0], grid.L))


class CharacteristicTracker:
    """Run observer that advects a particle with Heun's rule and samples beta.

    Pass an instance as ``observer=`` to :func:`flockfv.timestep.run`.
    """

    def __init__(self, initial: State, kernel: KernelSpec, law: ControlLaw, x0: float,
                 rho_floor: float = 1e-8):
        self.kernel = kernel
        self.law = law
        self.rho_floor = rho_floor
        self.track = CharacteristicTrack()
        self.x = float(x0)
        self._record(initial)

    def _record(self, state: State):
        rho, d, u = sample_characteristic(state, self.kernel, self.law, self.x)
        if rho <= self.rho_floor:
            self.track.truncated = True
            return u
        self.track.t.append(state.t)
        self.track.x.append(self.x)
        self.track.rho.append(rho)
        self.track.d.append(d)
        return u

    def __call__(self, previous: State, result):
        if self.track.truncated:
            return
        grid = previous.grid
        u_old = _periodic_interp(self.x, grid.centers(0), previous.u[0], grid.L)
        x_pred = self.x + result.dt * u_old
        u_new = _periodic_interp(x_pred, grid.centers(0), result.state.u[0], grid.L)
        self.x += 0.5 * result.dt * (u_old + u_new)
        self._record(result.state)


def beta_invariant(track) -> tuple[np.ndarray, float]:
    """beta = d / rho along a track and its max relative drift from beta_0."""
    beta = np.asarray(track.beta)
    drift = float(np.max(np.abs(beta - beta[0])) / abs(beta[0]))
    return beta, drift


# ---------------------------------------------------------------------------
# two dimensions
# ---------------------------------------------------------------------------


@dataclass
class ThresholdReport2D:
    q0: np.ndarray
    r0: np.ndarray
    s0: np.ndarray
    v0: np.ndarray
    d0: np.ndarray
    support: np.ndarray
    S0: float
    V0: float
    D: float
    mass: float
    Q_tilde: float
    delta0: np.ndarray
    inv_gamma: float
    global_regularity_sufficient: bool
    blowup_sufficient: bool
    notes: list = field(default_factory=list)

    @property
    def undetermined(self) -> bool:
        return not (self.global_regularity_sufficient or self.blowup_sufficient)

    @property
    def status(self) -> str:
        if self.global_regularity_sufficient:
            return "global_regularity_sufficient"
        if self.blowup_sufficient:
            return "blowup_sufficient"
        return "undetermined"

    def summary(self) -> dict:
        sup = self.support
        return {
            "dim": 2,
            "status": self.status,
            "S0": self.S0,
            "V0": self.V0,
            "D": self.D,
            "mass": self.mass,
            "Q_tilde": self.Q_tilde,
            "inv_gamma": self.inv_gamma,
            "delta0_min": float(self.delta0[sup].min()) if sup.any() else None,
            "delta0_max": float(self.delta0[sup].max()) if sup.any() else None,
            "d0_min": float(self.d0[sup].min()) if sup.any() else None,
            "notes": list(self.notes),
        }


def classify_2d(state: State, kernel: KernelSpec, law: ControlLaw,
                rho_floor_rel: float = 1e-8) -> ThresholdReport2D:
    """Evaluate the 2D regularity and blow-up sufficient conditions."""
    grid = state.grid
    if grid.dim != 2:
        raise ValueError("classify_2d needs a 2D state")
    u1, u2 = state.u
    d1u1, d2u1 = periodic_gradient(u1, grid, 0), periodic_gradient(u1, grid, 1)
    d1u2, d2u2 = periodic_gradient(u2, grid, 0), periodic_gradient(u2, grid, 1)
    q0, r0, s0 = d1u1 - d2u2, d2u1, d1u2
    v0 = d1u1 + d2u2
    inv_gamma = law.inv_gamma
    d0 = v0 + convolve_psi_rho(state, kernel) + inv_gamma
    delta0 = np.maximum(np.abs(q0), np.maximum(2 * np.abs(r0), 2 * np.abs(s0)))

    rho_max = float(state.rho.max())
    rho_floor = rho_floor_rel * rho_max
    support = (state.rho > rho_floor) if rho_max > 0 else np.zeros(grid.shape, bool)
    mass = total_mass(state)
    S0, V0 = support_diagnostics(state, rho_floor)
    D = S0 if V0 == 0 else S0 + law.gamma * V0
    Q_tilde = kernel.grad_sup_norm * mass * V0
    notes = []
    if not support.any():
        notes.append("empty support")
        return ThresholdReport2D(q0, r0, s0, v0, d0, support, 0.0, 0.0, 0.0, mass, 0.0, delta0,
                                 inv_gamma, False, False, notes)
    if law.uncontrolled and V0 > 0:
        notes.append("gamma = inf with V0 > 0: D is unbounded and psi(D) = 0")
    psi_D = 0.0 if math.isinf(D) else float(psi(kernel, D))

    dsup = delta0[support]
    d0s = d0[support]
    degenerate = dsup == 0
    lhs = psi_D * mass + inv_gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs1 = np.sqrt(4 * Q_tilde**2 + 2 * dsup**4) / dsup
        rhs2 = 2 * Q_tilde / dsup
    regular_pts = (~degenerate) & (lhs >= rhs1) & (d0s >= rhs2)
    regularity = bool(regular_pts.all())
    if degenerate.any():
        notes.append("undetermined (degenerate delta0 = 0 on part of the support)")

    blow_speed = kernel.sup_norm * mass + inv_gamma
    blow_pts = (np.minimum(r0[support], s0[support]) >= Q_tilde / blow_speed) & (d0s < -blow_speed)
    blowup = bool(blow_pts.any())
    return ThresholdReport2D(q0, r0, s0, v0, d0, support, S0, V0, D, mass, Q_tilde, delta0,
                             inv_gamma, regularity, blowup, notes)
