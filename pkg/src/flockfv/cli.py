"""Command-line entry point: ``flockfv {run,classify,presets,convergence}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .experiment import (EXIT_OK, EXIT_USAGE, jsonable, list_presets, run_experiment,
                         self_convergence, threshold_report)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    outcome = run_experiment(cfg, args.output)
    s = outcome.summary
    print(f"{cfg.preset}: t = {s['final_time']:.6g} after {s['steps']} steps -> {outcome.output_dir}")
    print(f"  peak-cell mass fraction {s['peak_cell_mass_fraction']:.4f}, "
          f"mass drift {s['mass_drift_rel']:.2e}")
    if s["divergence"]:
        d = s["divergence"]
        print(f"  divergence flagged at t = {d['time']:.6g}: {d['quantity']} = {d['value']:.6g}")
    return outcome.exit_code


def _cmd_classify(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(jsonable(threshold_report(cfg)), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_presets(args) -> int:
    catalog = list_presets()
    if args.json:
        print(json.dumps(jsonable(catalog), indent=2))
        return EXIT_OK
    print("initial data:")
    for name, info in catalog["initial"].items():
        dim = f"{info['dim']}D" if isinstance(info["dim"], int) else info["dim"]
        print(f"  {name:<18} {dim:<5} {info['experiment']}")
    print("target velocities:")
    for name, text in catalog["ubar"].items():
        print(f"  {name:<18} {text}")
    return EXIT_OK


def _cmd_convergence(args) -> int:
    cfg = load_config(args.config)
    if args.cells:
        cfg = replace(cfg, cells=(args.cells,) * cfg.dim)
    table = self_convergence(cfg, args.levels)
    print(table.format())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flockfv", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a config and write snapshots, diagnostics, summary")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides config and $FLOCKFV_OUTPUT_DIR)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("classify", help="threshold report for the initial data only")
    p.add_argument("config")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("presets", help="list initial-data and target presets")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_presets)

    p = sub.add_parser("convergence", help="self-convergence study with an EOC table")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3, help="number of grids, each twice as fine")
    p.add_argument("--cells", type=int, help="coarsest cells per axis (default: from config)")
    p.set_defaults(func=_cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
