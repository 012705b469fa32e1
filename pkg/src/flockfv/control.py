"""Instantaneous feedback control and desired-velocity presets.

The feedback law is the h -> 0 limit of the one-step optimal control,
phi = (u_bar - u) / gamma.  gamma = inf means no control at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Grid, State, indicator, sign_field

UBAR_PRESETS = {
    "constant": "constant target vector (value = c or c1, c2)",
    "sine_1d": "u_bar(x) = sin(pi x / L)",
    "birdcage": "unit corner directions outside the cross |x| <= L/5 or |y| <= L/5",
    "scarecrow": "2 (x, y) / |(x, y)| inside x^2 + y^2 <= 1/10, zero elsewhere",
    "reorientation": "constant (-1, -1)",
}


@dataclass(frozen=True)
class UbarPreset:
    name: str = "constant"
    value: tuple[float, ...] = (0.0,)
    orientation: str = "inward"

    def __post_init__(self):
        if self.name not in UBAR_PRESETS:
            raise ValueError(f"unknown u_bar preset {self.name!r}")
        object.__setattr__(self, "value", tuple(float(v) for v in np.atleast_1d(self.value)))


@dataclass(frozen=True)
class ControlLaw:
    gamma: float = math.inf
    ubar: UbarPreset = UbarPreset()

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive (or inf for no control), got {self.gamma}")

    @property
    def uncontrolled(self) -> bool:
        return math.isinf(self.gamma)

    @property
    def inv_gamma(self) -> float:
        return 0.0 if self.uncontrolled else 1.0 / self.gamma

    @classmethod
    def off(cls) -> "ControlLaw":
        return cls(math.inf)


def _birdcage(grid: Grid, orientation: str) -> np.ndarray:
    X, Y = grid.mesh()
    w = grid.L / 5
    # (1 - chi) on both axes; the printed y factor reads as a dropped minus sign
    cage = (1.0 - indicator(X, -w, w)) * (1.0 - indicator(Y, -w, w))
    return np.stack([sign_field(X, orientation) * cage, sign_field(Y, orientation) * cage])


def _scarecrow(grid: Grid) -> np.ndarray:
    X, Y = grid.mesh()
    r = np.hypot(X, Y)
    inside = (X**2 + Y**2 <= 0.1) & (r > 0)
    safe_r = np.where(r > 0, r, 1.0)
    return np.stack([np.where(inside, 2 * X / safe_r, 0.0), np.where(inside, 2 * Y / safe_r, 0.0)])


@lru_cache(maxsize=32)
def _ubar_cached(grid: Grid, preset: UbarPreset) -> np.ndarray:
    if preset.name == "constant":
        if len(preset.value) not in (1, grid.dim):
            raise ValueError(f"constant target {preset.value} does not fit a {grid.dim}D grid")
        value = np.broadcast_to(np.asarray(preset.value), (grid.dim,))
        field = np.stack([np.full(grid.shape, v) for v in value])
    elif preset.name == "sine_1d":
        if grid.dim != 1:
            raise ValueError("sine_1d target is one-dimensional")
        field = np.sin(np.pi * grid.mesh()[0] / grid.L)[None]
    else:
        if grid.dim != 2:
            raise ValueError(f"{preset.name} target is two-dimensional")
        if preset.name == "birdcage":
            field = _birdcage(grid, preset.orientation)
        elif preset.name == "scarecrow":
            field = _scarecrow(grid)
        else:
            field = np.full((2, *grid.shape), -1.0)
    field.setflags(write=False)
    return field


def ubar_field(grid: Grid, preset: UbarPreset) -> np.ndarray:
    """Desired velocity sampled at cell centers, shape (dim, *grid.shape)."""
    return _ubar_cached(grid, preset)


def instantaneous_control(state: State, law: ControlLaw) -> np.ndarray:
    if law.uncontrolled:
        return np.zeros_like(state.u)
    return (ubar_field(state.grid, law.ubar) - state.u) / law.gamma


def one_step_control(state: State, law: ControlLaw, h: float) -> np.ndarray:
    """Leading term of the one-step minimizer with gamma_h = h * gamma.

    h / (gamma_h + h^2) (u_bar - u) simplifies to (u_bar - u) / (gamma + h).
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if law.uncontrolled:
        return np.zeros_like(state.u)
    return (ubar_field(state.grid, law.ubar) - state.u) / (law.gamma + h)
