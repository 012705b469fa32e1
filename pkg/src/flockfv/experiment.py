"""Config-driven runs, file output and refinement studies.

Output layout for one run::

    <output_dir>/snapshot_000.csv   # t = 0, then one file per output time
    <output_dir>/diagnostics.csv    # one row per accepted step, appended live
    <output_dir>/summary.json       # threshold report, divergence, mass stats

Every number is written with 17 significant digits and nothing depends on
wall-clock time, so rerunning a config reproduces the files byte for byte.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, serialize_config
from .control import UBAR_PRESETS
from .grid import INITIAL_PRESETS, State, init_preset, total_mass, total_momentum
from .thresholds import classify_1d, classify_2d
from .timestep import RunResult, run

log = logging.getLogger(__name__)

OUTPUT_ENV = "FLOCKFV_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2

DIAGNOSTIC_COLUMNS = {
    1: ["t", "mass", "momentum_1", "kinetic_energy", "alignment_dissipation", "S", "V",
        "max_speed", "min_rho", "max_rho", "dt"],
    2: ["t", "mass", "momentum_1", "momentum_2", "kinetic_energy", "alignment_dissipation", "S", "V",
        "max_speed", "min_rho", "max_rho", "dt"],
}
SNAPSHOT_COLUMNS = {1: ["x", "rho", "u", "rho_u"], 2: ["x", "y", "rho", "u1", "u2", "rho_u1", "rho_u2"]}


def _g(x) -> str:
    return "%.17g" % x


def resolve_output_dir(config: RunConfig, override=None) -> Path:
    """Explicit override, then the environment variable, then the config."""
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(config.output_dir)


def initial_state(config: RunConfig) -> State:
    return init_preset(config.grid(), config.preset, **dict(config.preset_params))


def threshold_report(config: RunConfig, state: State | None = None) -> dict:
    state = state if state is not None else initial_state(config)
    if config.dim == 1:
        return classify_1d(state, config.kernel, config.law).summary()
    return classify_2d(state, config.kernel, config.law, config.rho_floor_rel).summary()


def peak_cell_fraction(state: State) -> float:
    mass = total_mass(state)
    if mass == 0:
        return 0.0
    return float(state.rho.max() * state.grid.cell_volume / mass)


def speed_stats(state: State) -> dict:
    speed = np.sqrt((state.u**2).sum(axis=0))
    return {"min": float(speed.min()), "mean": float(speed.mean()), "max": float(speed.max())}


def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_snapshot(path: Path, state: State, config_hash: str):
    grid = state.grid
    header = [
        f"dim = {grid.dim}",
        f"grid = {' x '.join(str(n) for n in grid.cells)} on [-{grid.L!r}, {grid.L!r}]^{grid.dim}",
        f"time = {_g(state.t)}",
        f"config_hash = {config_hash}",
        ",".join(SNAPSHOT_COLUMNS[grid.dim]),
    ]
    # row-major, x fastest: flattening the (ny, nx) arrays gives exactly that
    cols = [c.ravel() for c in grid.mesh()] + [state.rho.ravel()]
    cols += [uk.ravel() for uk in state.u] + [(state.rho * uk).ravel() for uk in state.u]
    data = np.column_stack(cols)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join("# " + h for h in header[:-1]) + "\n")
        fh.write(header[-1] + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


class DiagnosticsWriter:
    """Append-only CSV of per-step diagnostics, flushed after every row."""

    def __init__(self, path: Path, dim: int, config_hash: str):
        self.columns = DIAGNOSTIC_COLUMNS[dim]
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.fh.write(f"# config_hash = {config_hash}\n" + ",".join(self.columns) + "\n")
        self.fh.flush()

    def __call__(self, row: dict):
        self.fh.write(",".join(_g(row[c]) for c in self.columns) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


@dataclass
class ExperimentOutcome:
    exit_code: int
    output_dir: Path
    summary: dict
    result: RunResult


def run_experiment(config: RunConfig, output_dir=None) -> ExperimentOutcome:
    """Run ``config`` and write snapshots, diagnostics and a summary."""
    out = resolve_output_dir(config, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("snapshot_*.csv"):
        stale.unlink()
    digest = config.digest()
    (out / "config.ini").write_text(serialize_config(config), encoding="utf-8")

    initial = initial_state(config)
    report = threshold_report(config, initial)
    counter = iter(range(10**6))

    def on_snapshot(state):
        write_snapshot(out / f"snapshot_{next(counter):03d}.csv", state, digest)

    writer = DiagnosticsWriter(out / "diagnostics.csv", config.dim, digest)
    try:
        result = run(initial, config.kernel, config.law, config.scheme, config.t_final,
                     config.snapshot_times, policy=config.policy,
                     diagnostics_every=config.diagnostics_every, rho_floor_rel=config.rho_floor_rel,
                     on_row=writer, on_snapshot=on_snapshot)
    finally:
        writer.close()

    final = result.final_state
    m0, m1 = total_mass(initial), total_mass(final)
    p0, p1 = total_momentum(initial), total_momentum(final)
    summary = {
        "config_hash": digest,
        "preset": config.preset,
        "dim": config.dim,
        "cells": list(config.cells),
        "gamma": config.gamma,
        "ubar": config.ubar.name,
        "completed": result.completed and math.isclose(final.t, config.t_final),
        "final_time": final.t,
        "steps": result.steps,
        "threshold_report": report,
        "divergence": result.divergence.as_dict() if result.divergence else None,
        "mass_initial": m0,
        "mass_final": m1,
        "mass_drift_rel": abs(m1 - m0) / m0 if m0 else 0.0,
        "momentum_initial": p0.tolist(),
        "momentum_final": p1.tolist(),
        "peak_cell_mass_fraction": peak_cell_fraction(final),
        "peak_cell_density": float(final.rho.max()),
        "speed": speed_stats(final),
    }
    with open(out / "summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    code = EXIT_DIVERGED if result.divergence is not None else EXIT_OK
    return ExperimentOutcome(code, out, summary, result)


def list_presets() -> dict:
    """Catalog of initial-data and target-velocity presets."""
    initial = {
        name: {"dim": info.dim or "any", "experiment": info.figure, "description": info.description,
               "parameters": {k: v for k, v in info.defaults.items()}}
        for name, info in INITIAL_PRESETS.items()
    }
    return {"initial": initial, "ubar": dict(UBAR_PRESETS)}


# ---------------------------------------------------------------------------
# refinement study
# ---------------------------------------------------------------------------


def restrict(field: np.ndarray, dim: int) -> np.ndarray:
    """Average 2 (1D) or 2x2 (2D) fine cells onto the coarse grid."""
    out = 0.5 * (field[..., 0::2] + field[..., 1::2])
    if dim == 2:
        out = 0.5 * (out[..., 0::2, :] + out[..., 1::2, :])
    return out


@dataclass
class ConvergenceTable:
    cells: list[int]
    errors: list[float]
    eoc: list[float]

    def rows(self):
        for k, n in enumerate(self.cells[:-1]):
            yield n, self.errors[k], (self.eoc[k - 1] if k > 0 else None)

    def format(self) -> str:
        lines = [f"{'cells':>8} {'L1 error':>14} {'EOC':>6}"]
        for n, err, rate in self.rows():
            lines.append(f"{n:>8d} {err:>14.6e} {'' if rate is None else f'{rate:6.3f}':>6}")
        return "\n".join(lines)


def self_convergence(config: RunConfig, levels: int = 3) -> ConvergenceTable:
    """L1 self-convergence under simultaneous space-time refinement.

    The config grid is the coarsest level; each further level doubles the
    cells per axis (the CFL step halves with it).  Errors compare each level
    with the restriction of the next finer one, over all components.
    """
    if levels < 3:
        raise ValueError("need at least three levels for one rate")
    base = config.cells[0]
    finals = []
    cells = []
    for k in range(levels):
        n = base * 2**k
        cfg = replace(config, cells=(n,) * config.dim, snapshot_times=())
        res = run(initial_state(cfg), cfg.kernel, cfg.law, cfg.scheme, cfg.t_final, (),
                  policy=cfg.policy, diagnostics_every=0)
        if not res.completed:
            raise RuntimeError(f"refinement level {n} diverged at t={res.divergence.time}")
        finals.append(res.final_state)
        cells.append(n)
    errors = []
    for coarse, fine in zip(finals[:-1], finals[1:]):
        diff = coarse.stacked() - restrict(fine.stacked(), config.dim)
        errors.append(float(np.abs(diff).sum() * coarse.grid.cell_volume))
    eoc = [math.log2(a / b) for a, b in zip(errors[:-1], errors[1:])]
    return ConvergenceTable(cells, errors, eoc)
