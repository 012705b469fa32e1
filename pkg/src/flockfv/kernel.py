"""Cucker-Smale communication weight and the nonlocal alignment force.

Convolutions are midpoint-rule sums over cell centers on the periodic box,
with every displacement wrapped to its nearest image in [-L, L).  Because the
displacement between two centers depends only on the index offset, the
weights are tabulated once per (grid, kernel) as an ``n_y x n_x`` stencil.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Grid, State

# dense direct-sum matrices above this many entries are built block by block
_DENSE_LIMIT = 6000**2
_BLOCK_ENTRIES = 2**22


@dataclass(frozen=True)
class KernelSpec:
    zeta: float = 1.0
    beta: float = 10.0
    evaluation: str = "direct"

    def __post_init__(self):
        if not self.zeta > 0 or not self.beta > 0:
            raise ValueError("zeta and beta must be positive")
        if self.evaluation not in ("direct", "fft"):
            raise ValueError(f"evaluation must be 'direct' or 'fft', got {self.evaluation!r}")

    @property
    def sup_norm(self) -> float:
        """max psi = psi(0)."""
        return self.zeta ** (-self.beta)

    @property
    def grad_sup_norm(self) -> float:
        """max |grad psi|, attained as |x| -> 0."""
        return self.beta * self.zeta ** (-self.beta - 1.0)


def psi(spec: KernelSpec, *displacement):
    """psi(x) = (zeta + |x|)^-beta; pass one argument per coordinate."""
    r = np.hypot(*displacement) if len(displacement) > 1 else np.abs(displacement[0])
    return (spec.zeta + r) ** (-spec.beta)


def periodic_offsets(n: int, h: float) -> np.ndarray:
    """Minimal-image displacement k*h for offsets k = 0..n-1, in [-L, L)."""
    k = np.arange(n)
    return np.where(k < n / 2, k, k - n) * h


def stencil(grid: Grid, spec: KernelSpec) -> np.ndarray:
    """psi at every periodic index offset, times the cell volume."""
    if grid.dim == 1:
        table = psi(spec, periodic_offsets(grid.cells[0], grid.dx))
    else:
        dx = periodic_offsets(grid.cells[0], grid.dx)
        dy = periodic_offsets(grid.cells[1], grid.dy)
        table = psi(spec, dx[None, :], dy[:, None])
    return table * grid.cell_volume


class Convolver:
    """Applies f -> (psi * f) on a fixed grid.

    ``apply`` accepts fields with arbitrary leading axes; the trailing axes
    must match ``grid.shape``.
    """

    def __init__(self, grid: Grid, spec: KernelSpec, mode: str | None = None):
        self.grid = grid
        self.spec = spec
        self.mode = mode or spec.evaluation
        self.table = stencil(grid, spec)
        self._matrix = None
        self._table_hat = None
        if self.mode == "fft":
            self._table_hat = np.fft.rfftn(self.table)
        elif self.mode != "direct":
            raise ValueError(f"unknown convolution mode {self.mode!r}")

    @property
    def size(self) -> int:
        return int(np.prod(self.grid.shape))

    def _offset_index(self, rows=None):
        shape = self.grid.shape
        flat = np.arange(self.size)
        r = flat if rows is None else flat[rows]
        if len(shape) == 1:
            return ((r[:, None] - flat[None, :]) % shape[0],)
        ny, nx = shape
        jr, ir = np.divmod(r, nx)
        jc, ic = np.divmod(flat, nx)
        return ((jr[:, None] - jc[None, :]) % ny, (ir[:, None] - ic[None, :]) % nx)

    def matrix(self, rows=None) -> np.ndarray:
        """Rows of the dense midpoint-rule matrix K[p, q] = psi(x_p - x_q) |C|.

        ``rows`` is a slice or an index array of flattened cells.
        """
        if rows is None and self._matrix is not None:
            return self._matrix
        mat = self.table[self._offset_index(rows)]
        if rows is None and self.size**2 <= _DENSE_LIMIT:
            self._matrix = mat
        return mat

    def apply(self, field: np.ndarray) -> np.ndarray:
        field = np.asarray(field, dtype=float)
        shape = self.grid.shape
        lead = field.shape[: field.ndim - len(shape)]
        if self.mode == "fft":
            axes = tuple(range(-len(shape), 0))
            out = np.fft.irfftn(np.fft.rfftn(field, axes=axes) * self._table_hat,
                                s=shape, axes=axes)
            return out
        flat = field.reshape(-1, self.size).T
        if self.size**2 <= _DENSE_LIMIT:
            out = self.matrix() @ flat
        else:
            out = np.empty_like(flat)
            block = max(1, _BLOCK_ENTRIES // self.size)
            for start in range(0, self.size, block):
                rows = slice(start, min(start + block, self.size))
                out[rows] = self.matrix(rows) @ flat
        return out.T.reshape(*lead, *shape)


@lru_cache(maxsize=8)
def get_convolver(grid: Grid, spec: KernelSpec, mode: str | None = None) -> Convolver:
    return Convolver(grid, spec, mode)


def _check_bc(bc: str):
    if bc != "periodic":
        raise ValueError(f"only periodic boundaries are supported, got {bc!r}")


def convolve_psi_rho(state: State, spec: KernelSpec, bc: str = "periodic") -> np.ndarray:
    _check_bc(bc)
    return get_convolver(state.grid, spec).apply(state.rho)


def alignment_terms(conv: Convolver, rho: np.ndarray, u: np.ndarray):
    """Return (force, psi*rho) with force_k = psi*(rho u_k) - u_k psi*rho."""
    fields = np.concatenate([rho[None], rho[None] * u], axis=0)
    c = conv.apply(fields)
    return c[1:] - u * c[0][None], c[0]


def alignment_force(state: State, spec: KernelSpec, bc: str = "periodic") -> np.ndarray:
    """Nonlocal alignment integral sum_j psi_ij (u_j - u_i) rho_j |C| per cell."""
    _check_bc(bc)
    force, _ = alignment_terms(get_convolver(state.grid, spec), state.rho, state.u)
    return force


def alignment_dissipation(state: State, spec: KernelSpec, conv: Convolver | None = None) -> float:
    """sum_ij psi_ij |u_i - u_j|^2 rho_i rho_j |C|^2, via three convolutions."""
    conv = conv or get_convolver(state.grid, spec)
    rho, u = state.rho, state.u
    speed2 = (u**2).sum(axis=0)
    c = conv.apply(np.concatenate([rho[None], rho[None] * u, (rho * speed2)[None]], axis=0))
    per_cell = speed2 * c[0] - 2.0 * (u * c[1:-1]).sum(axis=0) + c[-1]
    return float((rho * per_cell).sum() * state.grid.cell_volume)
