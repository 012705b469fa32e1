"""Uniform periodic grids, cell-averaged states and initial-data presets.

Array layout: scalar fields have shape ``(nx,)`` in 1D and ``(ny, nx)`` in
2D, so x is the fastest (last) index.  Velocities carry a leading component
axis, ``u.shape == (dim, *grid.shape)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Grid:
    dim: int
    L: float
    cells: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.L > 0:
            raise ValueError(f"half width L must be positive, got {self.L}")
        if len(self.cells) != self.dim:
            raise ValueError(f"expected {self.dim} cell counts, got {self.cells}")
        for n in self.cells:
            if int(n) != n or n < 4:
                raise ValueError(f"need at least 4 cells per axis, got {n}")
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))

    @property
    def spacing(self) -> tuple[float, ...]:
        """Cell sizes (dx[, dy])."""
        return tuple(2.0 * self.L / n for n in self.cells)

    @property
    def dx(self) -> float:
        return self.spacing[0]

    @property
    def dy(self) -> float:
        if self.dim < 2:
            raise AttributeError("1D grid has no dy")
        return self.spacing[1]

    @property
    def shape(self) -> tuple[int, ...]:
        # array shape, y-major
        return tuple(reversed(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def centers(self, axis: int = 0) -> np.ndarray:
        n = self.cells[axis]
        h = self.spacing[axis]
        return -self.L + (np.arange(n) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates broadcast to the field shape: (X,) or (X, Y)."""
        if self.dim == 1:
            return (self.centers(0),)
        X, Y = np.meshgrid(self.centers(0), self.centers(1), indexing="xy")
        return X, Y

    def index_of(self, point) -> tuple[int, ...]:
        """Index (per axis, x first) of the cell containing ``point``."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for axis in range(self.dim):
            k = int(np.floor((point[axis] + self.L) / self.spacing[axis]))
            idx.append(min(max(k, 0), self.cells[axis] - 1))
        return tuple(idx)


def make_grid(dim: int, L: float, cells) -> Grid:
    if np.isscalar(cells):
        cells = (int(cells),) * dim
    return Grid(dim=int(dim), L=float(L), cells=tuple(cells))


@dataclass(frozen=True, eq=False)
class State:
    """Cell averages of density and velocity at time ``t``.

    The arrays are flagged read-only; solvers build new states instead of
    mutating this one.
    """

    grid: Grid
    rho: np.ndarray
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        u = np.array(self.u, dtype=float)
        if u.shape == self.grid.shape and self.grid.dim == 1:
            u = u[None]
        if rho.shape != self.grid.shape:
            raise ValueError(f"rho shape {rho.shape} != grid shape {self.grid.shape}")
        if u.shape != (self.grid.dim, *self.grid.shape):
            raise ValueError(f"u shape {u.shape} does not match grid")
        rho.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "t", float(self.t))

    @property
    def momentum_density(self) -> np.ndarray:
        return self.rho[None] * self.u

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.rho).all() and np.isfinite(self.u).all())

    def stacked(self) -> np.ndarray:
        """Solver vector w = (rho, u_1[, u_2]) with a leading component axis."""
        return np.concatenate([self.rho[None], self.u], axis=0)

    @classmethod
    def from_stacked(cls, grid: Grid, w: np.ndarray, t: float) -> "State":
        return cls(grid, w[0], w[1:], t)


def total_mass(state: State) -> float:
    return float(state.rho.sum() * state.grid.cell_volume)


def total_momentum(state: State) -> np.ndarray:
    axes = tuple(range(1, state.grid.dim + 1))
    return state.momentum_density.sum(axis=axes) * state.grid.cell_volume


def kinetic_energy(state: State) -> float:
    return float((state.rho * (state.u**2).sum(axis=0)).sum() * state.grid.cell_volume)


# ---------------------------------------------------------------------------
# initial-data presets
# ---------------------------------------------------------------------------


def heaviside(x, h0: float = 0.5):
    return np.where(x > 0, 1.0, np.where(x < 0, 0.0, h0))


def indicator(x, a, b):
    return ((x >= a) & (x <= b)).astype(float)


def sign_field(x, orientation: str = "inward", h0: float = 0.5):
    """Piecewise-constant unit velocity component built from H.

    ``outward`` is 2H(x) - 1, pointing away from the axis; ``inward`` is its
    negative, which is the orientation the heap and blow-up tests need for the
    flow to converge on the origin.
    """
    s = 2.0 * heaviside(x, h0) - 1.0
    if orientation == "outward":
        return s
    if orientation == "inward":
        return -s
    raise ValueError(f"orientation must be 'inward' or 'outward', got {orientation!r}")


def _heap(X, Y, cx, cy, width, cut):
    return np.maximum(np.exp(-width * (X - cx) ** 2 - width * (Y - cy) ** 2) - cut, 0.0)


def _two_blocks(grid, **_):
    (x,) = grid.mesh()
    L = grid.L
    rho = indicator(x, -2 * L / 3, -L / 6) + indicator(x, L / 6, 2 * L / 3)
    u = -np.sin(np.pi * x / L)
    return rho, u[None]


def _smooth_1d(grid, rho_mean=1.0, rho_amp=0.5, u_amp=0.25, **_):
    (x,) = grid.mesh()
    k = np.pi / grid.L
    rho = rho_mean + rho_amp * np.cos(k * x)
    u = u_amp * np.sin(k * x)
    return rho, u[None]


def _constant(grid, rho=1.0, u=None, **_):
    rho_f = np.full(grid.shape, float(rho))
    if u is None:
        u = (0.0,) * grid.dim
    u = np.broadcast_to(np.asarray(u, dtype=float), (grid.dim,))
    u_f = np.stack([np.full(grid.shape, c) for c in u])
    return rho_f, u_f


def _heap_velocity(grid, X, Y, orientation, h0):
    return np.stack([sign_field(X, orientation, h0), sign_field(Y, orientation, h0)])


def _symmetric_heaps(grid, orientation="inward", h0=0.5, **_):
    X, Y = grid.mesh()
    rho = _heap(X, Y, 0.5, 0.5, 10.0, 0.2) + _heap(X, Y, -0.5, -0.5, 10.0, 0.2)
    return rho, _heap_velocity(grid, X, Y, orientation, h0)


def _asymmetric_heaps(grid, orientation="inward", h0=0.5, **_):
    X, Y = grid.mesh()
    rho = _heap(X, Y, 0.5, 0.5, 10.0, 0.2) + 2.0 * _heap(X, Y, -0.5, -0.5, 10.0, 0.2)
    return rho, _heap_velocity(grid, X, Y, orientation, h0)


def _uniform_flock(grid, **_):
    return _constant(grid, 1.0, (1.0, 1.0))


def _scarecrow(grid, **_):
    X, Y = grid.mesh()
    phi = np.arctan2(Y, X)
    return np.ones(grid.shape), np.stack([np.cos(phi), -np.sin(phi)])


def _blowup(grid, orientation="inward", h0=0.5, **_):
    X, Y = grid.mesh()
    rho = _heap(X, Y, 0.0, 0.0, 2.0, 0.1)
    return rho, _heap_velocity(grid, X, Y, orientation, h0)


@dataclass(frozen=True)
class PresetInfo:
    name: str
    dim: int
    build: Callable
    figure: str
    description: str
    defaults: dict = field(default_factory=dict)


INITIAL_PRESETS: dict[str, PresetInfo] = {
    p.name: p
    for p in [
        PresetInfo("two_blocks", 1, _two_blocks, "1D: uncontrolled, homogeneous and inhomogeneous target runs",
                   "two unit blocks, u0 = -sin(pi x / L)"),
        PresetInfo("smooth_1d", 1, _smooth_1d, "convergence and characteristic studies",
                   "smooth periodic data for convergence studies",
                   {"rho_mean": 1.0, "rho_amp": 0.5, "u_amp": 0.25}),
        PresetInfo("constant", 0, _constant, "uniform states and unit tests", "spatially constant state",
                   {"rho": 1.0, "u": None}),
        PresetInfo("symmetric_heaps", 2, _symmetric_heaps, "2D: uncontrolled symmetric heaps",
                   "two Gaussian heaps at +-(1/2, 1/2)",
                   {"orientation": "inward", "h0": 0.5}),
        PresetInfo("asymmetric_heaps", 2, _asymmetric_heaps, "2D: asymmetric heaps, uncontrolled and controlled",
                   "heaps with the lower-left one doubled",
                   {"orientation": "inward", "h0": 0.5}),
        PresetInfo("reorientation", 2, _uniform_flock, "2D: reorientation",
                   "rho = 1, u = (1, 1)"),
        PresetInfo("birdcage", 2, _uniform_flock, "2D: birdcage",
                   "rho = 1, u = (1, 1); pair with the birdcage target"),
        PresetInfo("scarecrow", 2, _scarecrow, "2D: scarecrow",
                   "rho = 1, milling velocity (cos phi, -sin phi)"),
        PresetInfo("blowup", 2, _blowup, "2D: blow-up, uncontrolled vs controlled, resolution study",
                   "single heap at the origin with converging velocity",
                   {"orientation": "inward", "h0": 0.5}),
    ]
}

PRESET_ALIASES = {"blowup_2d": "blowup"}


def get_preset(name: str) -> PresetInfo:
    name = PRESET_ALIASES.get(name, name)
    try:
        return INITIAL_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown initial preset {name!r}") from None


def init_preset(grid: Grid, preset: str, **params) -> State:
    """Sample a named initial condition at the cell centers of ``grid``."""
    info = get_preset(preset)
    if info.dim and info.dim != grid.dim:
        raise ValueError(f"preset {preset!r} is {info.dim}D but the grid is {grid.dim}D")
    rho, u = info.build(grid, **{**info.defaults, **params})
    return State(grid, rho, u, 0.0)
