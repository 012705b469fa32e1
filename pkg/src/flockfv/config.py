"""Run configuration: a sectioned key-value text format.

Example::

    [grid]
    dim = 1
    L = 1.0
    cells = 200

    [initial]
    preset = two_blocks

    [control]
    gamma = 10
    ubar = constant
    value = 0.0

    [run]
    t_final = 3.0
    snapshot_times = 1.0, 2.0, 3.0

Omitted sections fall back to the defaults of the dataclasses below: minmod
limiter, CFL 0.95, zeta = 1, beta = 10, and no control.  Unknown sections or
keys are errors, and every error names the offending field and line.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field

from .control import UBAR_PRESETS, ControlLaw, UbarPreset
from .grid import get_preset, make_grid
from .kernel import KernelSpec
from .scheme import LIMITERS, SchemeConfig
from .timestep import BlowupPolicy


class ConfigError(ValueError):
    """Invalid configuration text; carries the field name and line when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(field)
        if line:
            where.append(f"line {line}")
        super().__init__(f"{' '.join(where)}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    dim: int = 1
    L: float = 1.0
    cells: tuple[int, ...] = (200,)
    preset: str = "two_blocks"
    preset_params: tuple[tuple[str, object], ...] = ()
    kernel: KernelSpec = KernelSpec()
    gamma: float = math.inf
    ubar: UbarPreset = UbarPreset()
    scheme: SchemeConfig = SchemeConfig()
    t_final: float = 1.0
    snapshot_times: tuple[float, ...] = ()
    diagnostics_every: int = 1
    output_dir: str = "output"
    seed: int = 0
    on_blowup: str = "stop"
    rho_floor_rel: float = 1e-8

    def __post_init__(self):
        if self.t_final < 0:
            raise ConfigError("must be non-negative", "run.t_final")
        times = self.snapshot_times
        if list(times) != sorted(times) or any(t < 0 or t > self.t_final for t in times):
            raise ConfigError("must be sorted and lie in [0, t_final]", "run.snapshot_times")
        if self.diagnostics_every < 0:
            raise ConfigError("must be >= 0", "run.diagnostics_every")

    @property
    def law(self) -> ControlLaw:
        return ControlLaw(self.gamma, self.ubar)

    @property
    def policy(self) -> BlowupPolicy:
        return BlowupPolicy(action=self.on_blowup)

    def grid(self):
        return make_grid(self.dim, self.L, self.cells)

    def digest(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# value parsing helpers
# ---------------------------------------------------------------------------


def _float(text: str) -> float:
    text = text.strip()
    if text.lower() in ("off", "inf", "infinity", "none"):
        return math.inf
    return float(text)


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return tuple(float(p) for p in parts)


def _ints(text: str) -> tuple[int, ...]:
    parts = [p for p in re.split(r"[,\sx]+", text.strip()) if p]
    return tuple(int(p) for p in parts)


def _param_value(text: str):
    try:
        vals = _floats(text)
    except ValueError:
        return text.strip()
    return vals[0] if len(vals) == 1 else vals


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return "off" if math.isinf(value) else repr(value)
    return str(value)


SCHEMA = {
    "grid": {"dim", "L", "cells"},
    "initial": {"preset"},  # plus the preset's own parameters
    "kernel": {"zeta", "beta"},
    "control": {"gamma", "ubar", "value", "orientation"},
    "scheme": {"limiter", "cfl", "convolution"},
    "run": {"t_final", "snapshot_times", "diagnostics_every", "output_dir", "seed",
            "on_blowup", "rho_floor_rel"},
}


def _line_index(text: str) -> dict:
    """Map (section, key) and section names to 1-based line numbers."""
    index = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault(section, n)
            continue
        m = re.match(r"([^=:]+)[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip()), n)
    return index


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case, L is upper case
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(exc.message.splitlines()[0], line=getattr(exc, "lineno", None)) from exc
    lines = _line_index(text)

    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError("unknown section", f"[{section}]", lines.get(section))

    def get(section, key, conv, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cannot parse {raw!r} ({exc})", f"{section}.{key}",
                              lines.get((section, key))) from None

    def check_keys(section, allowed):
        if not parser.has_section(section):
            return
        for key in parser.options(section):
            if key not in allowed:
                raise ConfigError("unknown key", f"{section}.{key}", lines.get((section, key)))

    for section, allowed in SCHEMA.items():
        if section != "initial":
            check_keys(section, allowed)

    def build(fieldname, section, key, factory):
        try:
            return factory()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            raise ConfigError(str(msg), fieldname, lines.get((section, key)) or lines.get(section)) from None

    dim = get("grid", "dim", int, 1)
    if dim not in (1, 2):
        raise ConfigError("must be 1 or 2", "grid.dim", lines.get(("grid", "dim")))
    L = get("grid", "L", float, 1.0)
    cells = get("grid", "cells", _ints, (200,) if dim == 1 else (64,))
    if len(cells) == 1:
        cells = cells * dim
    build("grid.cells", "grid", "cells", lambda: make_grid(dim, L, cells))

    preset = get("initial", "preset", str.strip, "two_blocks" if dim == 1 else "symmetric_heaps")
    info = build("initial.preset", "initial", "preset", lambda: get_preset(preset))
    if info.dim and info.dim != dim:
        raise ConfigError(f"preset {preset!r} is {info.dim}D but grid.dim = {dim}", "initial.preset",
                          lines.get(("initial", "preset")))
    check_keys("initial", {"preset", *info.defaults})
    params = []
    if parser.has_section("initial"):
        for key in sorted(parser.options("initial")):
            if key != "preset":
                params.append((key, get("initial", key, _param_value, None)))

    kernel = build("kernel", "kernel", "beta", lambda: KernelSpec(
        zeta=get("kernel", "zeta", float, 1.0),
        beta=get("kernel", "beta", float, 10.0),
        evaluation=get("scheme", "convolution", str.strip, "direct"),
    ))

    gamma = get("control", "gamma", _float, math.inf)
    if not gamma > 0:
        raise ConfigError("must be positive or 'off'", "control.gamma", lines.get(("control", "gamma")))
    ubar_name = get("control", "ubar", str.strip, "constant")
    if ubar_name not in UBAR_PRESETS:
        raise ConfigError(f"unknown target {ubar_name!r}; choose from {sorted(UBAR_PRESETS)}",
                          "control.ubar", lines.get(("control", "ubar")))
    ubar = build("control", "control", "ubar", lambda: UbarPreset(
        ubar_name,
        get("control", "value", _floats, (0.0,)),
        get("control", "orientation", str.strip, "inward"),
    ))

    limiter = get("scheme", "limiter", str.strip, "minmod")
    if limiter not in LIMITERS:
        raise ConfigError(f"must be one of {LIMITERS}", "scheme.limiter", lines.get(("scheme", "limiter")))
    cfl = get("scheme", "cfl", float, 0.95)
    if not 0 < cfl <= 1:
        raise ConfigError(f"must lie in (0, 1], got {cfl}", "scheme.cfl", lines.get(("scheme", "cfl")))
    scheme = build("scheme", "scheme", "convolution", lambda: SchemeConfig(
        limiter=limiter, cfl=cfl, convolution=kernel.evaluation))

    on_blowup = get("run", "on_blowup", str.strip, "stop")
    if on_blowup not in ("stop", "record"):
        raise ConfigError("must be 'stop' or 'record'", "run.on_blowup", lines.get(("run", "on_blowup")))
    run_kwargs = dict(
        t_final=get("run", "t_final", float, 1.0),
        snapshot_times=get("run", "snapshot_times", _floats, ()),
        diagnostics_every=get("run", "diagnostics_every", int, 1),
        output_dir=get("run", "output_dir", str.strip, "output"),
        seed=get("run", "seed", int, 0),
        on_blowup=on_blowup,
        rho_floor_rel=get("run", "rho_floor_rel", float, 1e-8),
    )
    try:
        return RunConfig(dim=dim, L=L, cells=tuple(cells), preset=preset, preset_params=tuple(params),
                         kernel=kernel, gamma=gamma, ubar=ubar, scheme=scheme, **run_kwargs)
    except ConfigError as exc:
        key = exc.field.split(".")[-1] if exc.field else None
        exc.line = lines.get(("run", key))
        raise ConfigError(str(exc).split(": ", 1)[-1], exc.field, exc.line) from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config`` inverts it exactly."""
    sections = {
        "grid": {"dim": cfg.dim, "L": float(cfg.L), "cells": tuple(cfg.cells)},
        "initial": {"preset": cfg.preset, **dict(cfg.preset_params)},
        "kernel": {"zeta": float(cfg.kernel.zeta), "beta": float(cfg.kernel.beta)},
        "control": {"gamma": float(cfg.gamma), "ubar": cfg.ubar.name, "value": cfg.ubar.value,
                    "orientation": cfg.ubar.orientation},
        "scheme": {"limiter": cfg.scheme.limiter, "cfl": float(cfg.scheme.cfl),
                   "convolution": cfg.scheme.convolution},
        "run": {"t_final": float(cfg.t_final), "snapshot_times": tuple(float(t) for t in cfg.snapshot_times),
                "diagnostics_every": cfg.diagnostics_every, "output_dir": cfg.output_dir,
                "seed": cfg.seed, "on_blowup": cfg.on_blowup, "rho_floor_rel": float(cfg.rho_floor_rel)},
    }
    out = []
    for name, values in sections.items():
        out.append(f"[{name}]")
        for key, value in values.items():
            if value is None or value == ():
                continue
            out.append(f"{key} = {_fmt(value)}")
        out.append("")
    return "\n".join(out)
