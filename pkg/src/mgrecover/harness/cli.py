"""Command line entry point: ``mgrecover <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from ..fault import FaultScenario
from ..mesh import ConfigurationError
from .experiments import (ExperimentConfig, run_estimator_study, run_faulty, run_kappa_sweep,
                          run_multi_fault, run_solve)

COMMANDS = {
    "solve": run_solve,
    "faulty-run": run_faulty,
    "sweep-kappa": run_kappa_sweep,
    "estimator-study": run_estimator_study,
    "multi-fault": run_multi_fault,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="output directory for CSV files")
    common.add_argument("--m0", type=int, help="coarsest-grid cells per axis")
    common.add_argument("--levels", type=int, help="number of refinements L")
    common.add_argument("--p-axis", type=int, help="ranks per axis (P = p_axis**3)")
    common.add_argument("--tol", type=float, help="relative estimator tolerance")
    common.add_argument("--seed", type=int, help="seed for random problems")
    common.add_argument("--scenario", help="JSON fault scenario (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mgrecover", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "estimator-study":
            p.add_argument("--study-levels", type=int, nargs="+", default=[3, 4],
                           help="refinement depths to study")
            p.add_argument("--cycles", type=int, default=10)
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {k: v for k, v in (("out", args.out), ("m0", args.m0), ("L", args.levels),
                                   ("p_axis", args.p_axis), ("tol", args.tol),
                                   ("seed", args.seed)) if v is not None}
    if args.scenario:
        overrides["scenario"] = FaultScenario.load(args.scenario)
    return dataclasses.replace(cfg, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "estimator-study":
            rows = run_estimator_study(cfg, args.study_levels, args.cycles)
            print(f"estimator-study: {len(rows)} rows -> {cfg.out}/estimator.csv")
            return 0
        reports = COMMANDS[args.command](cfg)
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for rep in reports:
        delay = rep.deltas.get("delay_iters", 0.0)
        print(f"{rep.run_id:<28s} iters={rep.iterations_total:6.1f} "
              f"time={rep.sim_time_total:.4f}s delay={delay:+.1f}")
    print(f"CSV written to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
