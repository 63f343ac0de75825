"""Command-line entry point: ``adaptid <command> CONFIG [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import harness

log = logging.getLogger("adaptid")


def _config_arg(value: str):
    """A YAML path, or ``preset:<name>`` for a shipped preset."""
    try:
        if value.startswith("preset:"):
            return harness.load_preset(value.split(":", 1)[1])
        return harness.load_config(value)
    except (OSError, yaml.YAMLError) as exc:
        raise argparse.ArgumentTypeError(f"cannot read config {value}: {exc}") from exc


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=_config_arg, help="YAML config path or preset:<name>")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="artifact directory (default: out)")
    p.add_argument("--n", type=int, help="truncation order")
    p.add_argument("--omega", type=float, help="base frequency (default 1/(n+1))")
    p.add_argument("--dt", type=float, help="time step [s]")
    p.add_argument("--t-end", type=float, help="simulation horizon [s]")
    p.add_argument("--grid-points", type=int, help="PDE grid intervals")
    p.add_argument("--decimation", type=float, help="output row spacing [s]")
    p.add_argument("--name", help="artifact file prefix")


def _resolved(args) -> harness.ExperimentConfig:
    cfg = args.config
    changes = {
        "n": args.n,
        "omega": args.omega,
        "dt": args.dt,
        "t_end": args.t_end,
        "grid_points": args.grid_points,
        "decimation": args.decimation,
        "name": args.name,
    }
    for key in ("gamma", "alpha0", "method"):
        if hasattr(args, key):
            changes[key] = getattr(args, key)
    return cfg.override(**changes)


def _print(summary: dict) -> None:
    shown = {k: v for k, v in summary.items() if k not in ("trajectory", "config")}
    print(json.dumps(shown, indent=2, default=float))


def cmd_simulate(args) -> int:
    summary = harness.run_simulate(_resolved(args), args.out_dir)
    _print(summary)
    return 0 if summary["guards_passed"] else 1


def cmd_identify(args) -> int:
    cfg = _resolved(args)
    step = max(1, int(round(10.0 / cfg.decimation)))
    count = {"rows": 0}

    def progress(t, alpha, J):
        count["rows"] += 1
        if count["rows"] % step == 0:
            log.info("t=%.1f J=%.3e", t, J)

    summary = harness.run_identify(cfg, args.out_dir, progress=progress)
    _print(summary)
    return 0 if summary["guards_passed"] else 1


def cmd_verify_pe(args) -> int:
    summary = harness.run_verify_pe(_resolved(args), args.out_dir)
    _print(summary)
    return 0 if summary["guards_passed"] else 1


def cmd_sweep_rho(args) -> int:
    cfg = _resolved(args)
    lo = cfg.sweep["n_min"] if args.n_min is None else args.n_min
    hi = cfg.sweep["n_max"] if args.n_max is None else args.n_max
    reports = harness.run_sweep_rho(cfg, args.out_dir, range(lo, hi + 1), kappa_source=args.kappa_source)
    for r in reports:
        print(f"n={r.n:2d} omega={r.omega:.5f} kappa={r.kappa:.4e} rho_u={r.rho_u:.4e} {r.method}")
    ok = all(r.kappa > 0 and r.settled for r in reports)
    if args.rho_tol is not None:
        passing = [r.n for r in reports if r.rho_u <= args.rho_tol]
        print(f"smallest n with rho_u <= {args.rho_tol:g}: {passing[0] if passing else 'none'}")
    return 0 if ok else 1


def cmd_reconstruct(args) -> int:
    out = args.output or args.estimates.with_name(args.estimates.stem.replace("_estimates", "") + "_reconstruction.csv")
    invalid = harness.run_reconstruct(args.kind, args.estimates, out)
    print(f"wrote {out} ({invalid} rows outside the invertible region)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptid", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="plant-only run, writes t,u,y")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="full identification run")
    _add_common(p)
    p.add_argument("--gamma", type=float, help="adaptation gain")
    p.add_argument("--alpha0", type=float, help="fill value for the initial estimate")
    p.add_argument("--method", choices=["exponential", "rk4"], help="update-law integrator")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("verify-pe", help="excitation level and bound ratio at the configured n")
    _add_common(p)
    p.set_defaults(func=cmd_verify_pe)

    p = sub.add_parser("sweep-rho", help="bound ratio over a range of n")
    _add_common(p)
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--kappa-source", choices=["data", "steady-state"], default="data",
                   help="excitation level for mixed unknowns (default: simulate)")
    p.add_argument("--rho-tol", type=float, help="report the smallest n meeting this ratio")
    p.set_defaults(func=cmd_sweep_rho)

    p = sub.add_parser("reconstruct", help="recompute parameters from an estimates CSV")
    p.add_argument("kind", choices=["delay", "heat", "wave"])
    p.add_argument("estimates", type=Path)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
