"""Kurganov-Tadmor central fluxes with MUSCL reconstruction.

The system is written in the flux form used for the alignment model,

    w = (rho, u),   F(w) = (rho u, u^2 / 2)                       (1D)
    F_1 = (rho u1, u1^2/2, u1 u2/2),  F_2 = (rho u2, u1 u2/2, u2^2/2)   (2D)

so the velocity equation is Burgers-like rather than a momentum balance.
Stacked solver arrays have shape (ncomp, *grid.shape); in 2D the physical x
direction is the last array axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, State
from .kernel import Convolver, KernelSpec, alignment_terms, get_convolver

LIMITERS = ("minmod", "none")


@dataclass(frozen=True)
class SchemeConfig:
    limiter: str = "minmod"
    bc: str = "periodic"
    cfl: float = 0.95
    convolution: str = "direct"

    def __post_init__(self):
        if self.limiter not in LIMITERS:
            raise ValueError(f"limiter must be one of {LIMITERS}, got {self.limiter!r}")
        if self.bc != "periodic":
            raise ValueError(f"only periodic boundaries are supported, got {self.bc!r}")
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.convolution not in ("direct", "fft"):
            raise ValueError(f"convolution must be 'direct' or 'fft', got {self.convolution!r}")


def minmod(a, b):
    """Smaller-magnitude argument when signs agree, else zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b > 0, out, 0.0)


def limited_slope(w: np.ndarray, axis: int, h: float, limiter: str) -> np.ndarray:
    fwd = (np.roll(w, -1, axis=axis) - w) / h
    bwd = (w - np.roll(w, 1, axis=axis)) / h
    if limiter == "minmod":
        return minmod(fwd, bwd)
    return 0.5 * (fwd + bwd)


@dataclass
class Reconstruction:
    """Piecewise-linear point values.

    1D: ``east``/``west`` face values.  2D: corner values ``ne, nw, se, sw``
    (north = +y, east = +x).  All arrays are stacked like the solver state.
    """

    dim: int
    east: np.ndarray | None = None
    west: np.ndarray | None = None
    ne: np.ndarray | None = None
    nw: np.ndarray | None = None
    se: np.ndarray | None = None
    sw: np.ndarray | None = None


def reconstruct(w: np.ndarray, grid: Grid, config: SchemeConfig) -> Reconstruction:
    if isinstance(w, State):
        w = w.stacked()
    if grid.dim == 1:
        half = 0.5 * grid.dx * limited_slope(w, -1, grid.dx, config.limiter)
        return Reconstruction(1, east=w + half, west=w - half)
    hx = 0.5 * grid.dx * limited_slope(w, -1, grid.dx, config.limiter)
    hy = 0.5 * grid.dy * limited_slope(w, -2, grid.dy, config.limiter)
    return Reconstruction(2, ne=w + hx + hy, nw=w - hx + hy, se=w + hx - hy, sw=w - hx - hy)


def physical_flux(w: np.ndarray, axis: int = 0) -> np.ndarray:
    """F(w) along physical axis 0 (x) or 1 (y) for stacked w."""
    rho, u = w[0], w[1:]
    if len(u) == 1:
        return np.stack([rho * u[0], 0.5 * u[0] ** 2])
    un = u[axis]
    return np.stack([rho * un, 0.5 * un * u[0], 0.5 * un * u[1]])


def _speed_bounds(*states, axis: int = 0):
    # eigenvalues of dF/dw are {u_n, u_n/2}; extremes of {u_n, 0} cover both
    un = np.stack([s[1 + axis] for s in states])
    return np.maximum(un.max(axis=0), 0.0), np.minimum(un.min(axis=0), 0.0)


def wave_speeds(left: np.ndarray | tuple, right: np.ndarray | tuple, axis: int = 0):
    """One-sided local speeds (a+, a-) at interfaces.

    ``left``/``right`` are the stacked states (or tuples of corner states)
    on either side of each interface.
    """
    left = left if isinstance(left, tuple) else (left,)
    right = right if isinstance(right, tuple) else (right,)
    return _speed_bounds(*left, *right, axis=axis)


def _kt_combine(f_left, f_right, w_left, w_right, ap, am):
    """Central-upwind combination; equal zero speeds fall back to the average."""
    span = ap - am
    degenerate = span <= 0
    safe = np.where(degenerate, 1.0, span)
    flux = (ap * f_left - am * f_right) / safe + (ap * am / safe) * (w_right - w_left)
    return np.where(degenerate, 0.5 * (f_left + f_right), flux)


def kt_flux_1d(w_left: np.ndarray, w_right: np.ndarray, ap=None, am=None) -> np.ndarray:
    """Flux at interfaces with left state E_{i-1} and right state W_i."""
    if ap is None:
        ap, am = wave_speeds(w_left, w_right)
    return _kt_combine(physical_flux(w_left), physical_flux(w_right), w_left, w_right, ap, am)


def kt_flux_2d_x(recon: Reconstruction):
    """x-fluxes F*_{i-1/2, j} stored at cell (i, j); returns (flux, a+, a-).

    Left corners EN, ES of cell i-1 and right corners WN, WS of cell i are
    combined with the trapezoid rule along the face.
    """
    en, es = np.roll(recon.ne, 1, axis=-1), np.roll(recon.se, 1, axis=-1)
    wn, ws = recon.nw, recon.sw
    ap, am = wave_speeds((en, es), (wn, ws), axis=0)
    f_left = 0.5 * (physical_flux(en, 0) + physical_flux(es, 0))
    f_right = 0.5 * (physical_flux(wn, 0) + physical_flux(ws, 0))
    flux = _kt_combine(f_left, f_right, 0.5 * (en + es), 0.5 * (wn + ws), ap, am)
    return flux, ap, am


def kt_flux_2d_y(recon: Reconstruction):
    """y-fluxes F*_{i, j-1/2} stored at cell (i, j): corners WN, EN of j-1
    below and WS, ES of j above."""
    wn, en = np.roll(recon.nw, 1, axis=-2), np.roll(recon.ne, 1, axis=-2)
    ws, es = recon.sw, recon.se
    bp, bm = wave_speeds((wn, en), (ws, es), axis=1)
    f_low = 0.5 * (physical_flux(wn, 1) + physical_flux(en, 1))
    f_up = 0.5 * (physical_flux(ws, 1) + physical_flux(es, 1))
    flux = _kt_combine(f_low, f_up, 0.5 * (wn + en), 0.5 * (ws + es), bp, bm)
    return flux, bp, bm


def flux_divergence(w: np.ndarray, grid: Grid, config: SchemeConfig) -> np.ndarray:
    """-(dF_1/dx + dF_2/dy) from KT fluxes; returns (tendency, max |speed|)."""
    recon = reconstruct(w, grid, config)
    if grid.dim == 1:
        left = np.roll(recon.east, 1, axis=-1)
        ap, am = wave_speeds(left, recon.west)
        fx = kt_flux_1d(left, recon.west, ap, am)
        div = (np.roll(fx, -1, axis=-1) - fx) / grid.dx
        speed = max(ap.max(), -am.min())
        return -div, float(speed)
    fx, ap, am = kt_flux_2d_x(recon)
    fy, bp, bm = kt_flux_2d_y(recon)
    div = (np.roll(fx, -1, axis=-1) - fx) / grid.dx + (np.roll(fy, -1, axis=-2) - fy) / grid.dy
    speed = max(ap.max(), -am.min(), bp.max(), -bm.min())
    return -div, float(speed)


def nonstiff_rhs(w, grid: Grid, kernel: KernelSpec | Convolver, config: SchemeConfig):
    """Non-stiff tendency: transport fluxes plus the alignment force.

    Returns ``(tendency, info)`` where ``info`` holds the max interface speed
    and whether every entry is finite.
    """
    if isinstance(w, State):
        w = w.stacked()
    conv = kernel if isinstance(kernel, Convolver) else get_convolver(grid, kernel, config.convolution)
    tendency, speed = flux_divergence(w, grid, config)
    force, conv_rho = alignment_terms(conv, w[0], w[1:])
    tendency[1:] += force
    info = {"max_speed": speed, "finite": bool(np.isfinite(tendency).all()), "psi_rho": conv_rho}
    return tendency, info
