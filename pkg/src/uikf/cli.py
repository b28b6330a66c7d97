"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 rank condition violated,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness as hs
from . import io as uio
from .errors import ConfigError, RankConditionError

EXIT_OK, EXIT_CONFIG, EXIT_RANK, EXIT_IO = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--scenario", choices=hs.SCENARIOS, help="override the config scenario")
    common.add_argument("--out", type=Path, help="output directory (default: config 'out')")
    common.add_argument("--seed", type=int, help="base seed; rep i uses seed + i")
    common.add_argument("--reps", type=int, help="Monte-Carlo replications")
    common.add_argument("--filters", help="comma-separated subset of " + ",".join(hs.FILTERS))
    common.add_argument("--format", choices=("csv", "json"), help="stats document format")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="uikf", description="Unknown-input Kalman filtering experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one trajectory, no filtering")
    sub.add_parser("estimate", parents=[common], help="one replication with every selected filter")
    sub.add_parser("mc", parents=[common], help="Monte-Carlo replications of one Q/R cell")
    sub.add_parser("sweep", parents=[common], help="Monte-Carlo over the Q/R grid")
    pd = sub.add_parser("pd", parents=[common], help="detection probability curve")
    pd.add_argument("--separation", type=float, default=2.0, help="distance between the two modes")
    pd.add_argument("--steps", type=int, default=0,
                    help="if positive, also measure decision accuracy over this many steps per point")
    return p


def build_config(args) -> hs.ExperimentConfig:
    data = {}
    if args.config is not None:
        cfg = hs.load_config(args.config)
        data = cfg.to_dict()
    if args.scenario is not None:
        if args.scenario != data.get("scenario", args.scenario):
            data.pop("params", None)
            data.pop("filters", None)
        data["scenario"] = args.scenario
    if args.seed is not None:
        data["base_seed"] = args.seed
    if args.reps is not None:
        data["reps"] = args.reps
    if args.filters is not None:
        data["filters"] = [f for f in (s.strip() for s in args.filters.split(",")) if f]
    if args.format is not None:
        data["format"] = args.format
    if args.out is not None:
        data["out"] = str(args.out)
    return hs.ExperimentConfig.from_dict(data)


def _cmd_simulate(cfg):
    cfg = replace(cfg, filters=(), reps=1)
    res = hs.run_experiment(cfg)
    spec = hs.build_scenario(cfg)
    return uio.emit(cfg.out, res.traces, res.stats, cfg.format, spec.config)


def _cmd_estimate(cfg):
    cfg = replace(cfg, reps=1, traces="first")
    res = hs.run_experiment(cfg)
    spec = hs.build_scenario(cfg)
    return uio.emit(cfg.out, res.traces, res.stats, cfg.format, spec.config)


def _cmd_mc(cfg):
    res = hs.run_experiment(cfg)
    spec = hs.build_scenario(cfg)
    return uio.emit(cfg.out, res.traces, res.stats, cfg.format, spec.config)


def _cmd_sweep(cfg):
    table, traces = hs.qr_sweep(cfg)
    grid = cfg.qr_grid if cfg.qr_grid is not None else hs.QR_GRID
    written = []
    for i, (q, r) in enumerate(grid):
        spec = hs.build_scenario(cfg, q, r)
        sub = Path(cfg.out) / f"cell_{i}"
        written += uio.emit(sub, traces[i], None, cfg.format, spec.config)
    written += uio.emit(cfg.out, [], table, cfg.format)
    return written


def _cmd_pd(cfg, args):
    header, cols = uio.pd_curve(args.separation)
    if args.steps > 0:
        acc = [hs.decision_trial(args.separation, s, args.steps, cfg.base_seed + i)[0]
               for i, s in enumerate(cols[0])]
        header, cols = header + ["accuracy"], cols + [np.array(acc)]
    path = Path(cfg.out) / "fig6.csv"
    uio.write_table(path, header, cols)
    return [path]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "pd":
            written = _cmd_pd(cfg, args)
        else:
            written = {"simulate": _cmd_simulate, "estimate": _cmd_estimate,
                       "mc": _cmd_mc, "sweep": _cmd_sweep}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RankConditionError as exc:
        print(f"rank condition violated: {exc}", file=sys.stderr)
        return EXIT_RANK
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
