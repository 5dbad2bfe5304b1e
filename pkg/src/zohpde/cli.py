"""Command line front end.

    zohpde solve-kernels --config CFG [--out DIR]
    zohpde run --config CFG [--out DIR] [--pathway ide|fd|both] [--seed N]
    zohpde sweep --config CFG --axis T|N|seed --values V [V ...] [--out DIR]
    zohpde stability-curve (--config CFG | --M M --a A) [--T-min ...] [--out DIR]

Exit codes: 0 success, 2 config error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import stability
from .functions import InputError
from .ide_sim import NumericalError
from .kernels import ConvergenceError
from .scenario import (ConfigError, compute_kernels, load_config, run_scenario,
                       solve_kernels_to, sweep)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser():
    ap = argparse.ArgumentParser(prog="zohpde", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON scenario config, or the name of a bundled one")
        p.add_argument("--out", help="output directory (overrides output_dir)")

    p = sub.add_parser("solve-kernels", help="solve k, l and write the gain")
    common(p)
    p = sub.add_parser("run", help="run one scenario")
    common(p)
    p.add_argument("--pathway", choices=("ide", "fd", "both"))
    p.add_argument("--seed", type=int)
    p = sub.add_parser("sweep", help="run a scenario over one axis")
    common(p)
    p.add_argument("--axis", choices=("T", "N", "seed"), required=True)
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--pathway", choices=("ide", "fd", "both"))
    p = sub.add_parser("stability-curve", help="sigma_max versus T")
    common(p, config_required=False)
    p.add_argument("--M", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--T-min", type=float, default=0.01)
    p.add_argument("--T-max", type=float, default=1.0)
    p.add_argument("--num", type=int, default=100)
    return ap


def _apply_overrides(cfg, args):
    if getattr(args, "pathway", None):
        cfg.pathways = args.pathway
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be nonnegative")
        cfg.schedule["seed"] = args.seed
    cfg.validate()
    return cfg


def _parse_values(axis, raw):
    out = []
    for v in raw:
        try:
            out.append(float(v) if axis == "T" else int(v))
        except ValueError:
            raise ConfigError(f"--values: {v!r} is not a valid {axis} value")
    return out


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ConvergenceError) as exc:
        print(f"numerical error [{type(exc).__module__}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(args):
    if args.verb == "stability-curve":
        return _stability_curve(args)
    cfg = _apply_overrides(load_config(args.config), args)
    out = args.out or cfg.output_dir
    if args.verb == "solve-kernels":
        man = solve_kernels_to(cfg, out)
        print(json.dumps({"M": man["M"], "a": man["a"], "out": out}))
    elif args.verb == "run":
        man = run_scenario(cfg, out)
        print(json.dumps({"out": out, "files": len(man["files"]),
                          "warnings": man["warnings"]}))
    elif args.verb == "sweep":
        rows, path = sweep(cfg, args.axis, _parse_values(args.axis, args.values), out)
        failed = sum(r["status"] != "ok" for r in rows)
        print(json.dumps({"summary": str(path), "runs": len(rows), "failed": failed}))
    return EXIT_OK


def _stability_curve(args):
    if args.config:
        cfg = load_config(args.config)
        _, _, gain = compute_kernels(cfg.problem, cfg.N)
        M, a = gain.M, gain.a
        out = Path(args.out or cfg.output_dir)
    else:
        if args.M is None or args.a is None:
            raise ConfigError("stability-curve: give --config or both --M and --a")
        M, a = args.M, args.a
        out = Path(args.out or ".")
    if args.M is not None and args.config:
        M = args.M
    if M < 0:
        raise ConfigError("--M: must be nonnegative")
    if not (0 < args.T_min < args.T_max) or args.num < 2:
        raise ConfigError("--T-min/--T-max/--num: need 0 < T-min < T-max and num >= 2")
    rows = stability.sigma_curve(M, a, np.linspace(args.T_min, args.T_max, args.num))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sigma_curve.csv"
    stability.write_sigma_curve(path, rows)
    print(json.dumps({"M": M, "a": a, "curve": str(path)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
