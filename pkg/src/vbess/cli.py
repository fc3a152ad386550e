"""Command-line entry point: ``vbess generate | run | sweep``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import RunConfig, load_config
from .exceptions import SolverError, ValidationError
from .study import run_study, run_sweep
from .timeseries import SynthesisParams, days_grid, synthesize_neighborhood, write_profiles

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3

log = logging.getLogger("vbess")


def _csv_list(text: str):
    return [s.strip() for s in text.split(",") if s.strip()]


def _fractions(text: str):
    try:
        return [float(s) for s in _csv_list(text)]
    except ValueError:
        raise ValidationError(f"--fractions: not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vbess", description="Virtualized home battery sharing studies.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic profiles CSV")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--homes", type=int, default=12)
    g.add_argument("--days", type=int, default=28)
    g.add_argument("--season", choices=("summer", "winter"), default="summer")
    g.add_argument("--ev-penetration", type=float, default=0.5)
    g.add_argument("--delta-t", type=float, default=0.5)
    g.add_argument("--out", required=True, help="output CSV path")

    for name, helptext in (("run", "compare schemes over sampled trials"),
                           ("sweep", "hybrid shared-fraction sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON run config (default: bundled desk-scale config)")
        p.add_argument("--trials", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", help="output directory (falls back to $VBESS_OUT_DIR)")
        p.add_argument("--controller", choices=("foresight", "mpc"))
        p.add_argument("--forecaster", choices=("naive", "oracle"))
        if name == "run":
            p.add_argument("--schemes", help="comma-separated, e.g. joint,individual,hybrid:0.25")
            p.add_argument("--trajectories", action="store_true", help="also write per-trial trajectory JSON")
        else:
            p.add_argument("--fractions", help="comma-separated shared fractions in [0, 1]")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    over = cfg.to_dict()
    for key in ("trials", "jobs", "seed", "controller", "forecaster"):
        if getattr(args, key, None) is not None:
            over[key] = getattr(args, key)
    if getattr(args, "schemes", None):
        over["schemes"] = _csv_list(args.schemes)
    if getattr(args, "trajectories", False):
        over["write_trajectories"] = True
    if getattr(args, "fractions", None):
        over["sweep_fractions"] = _fractions(args.fractions)
    out_dir = args.out_dir or os.environ.get("VBESS_OUT_DIR")
    if out_dir:
        over["out_dir"] = out_dir
    return RunConfig.from_dict(over)


def cmd_generate(args) -> int:
    if args.homes < 1 or args.days < 1:
        raise ValidationError("--homes and --days must be >= 1")
    params = SynthesisParams(season=args.season, ev_penetration=args.ev_penetration)
    grid = days_grid(args.days, args.delta_t)
    homes = synthesize_neighborhood(args.seed, args.homes, grid, params)
    write_profiles(homes, args.out)
    log.info("wrote %d homes x %d steps to %s", len(homes), grid.num_steps, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    rows = run_study(cfg, cfg.out_dir)
    log.info("wrote %d report rows to %s", len(rows), cfg.out_dir)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    rows = run_sweep(cfg, cfg.out_dir)
    log.info("wrote %d sweep rows to %s", len(rows), cfg.out_dir)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"vbess: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"vbess: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
