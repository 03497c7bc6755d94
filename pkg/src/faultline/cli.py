"""Command-line interface.

Subcommands:
    run          execute an experiment; writes rounds.csv / design.json /
                 failures.json into --out
    stress       evaluate a design (design.json in --out) on fresh prior
                 samples; writes stress.csv + stress_summary.json
    convergence  append the fixed-test-set cost column to rounds.csv
    gradcheck    finite-difference gradient suite for the configured env

Shared flags: --config PATH, --seed N, --out DIR, --workers N,
--method {ours-mala|ours-rmh|dr|gd}.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import (
    ConfigError,
    ExperimentConfig,
    build_environment,
    load_experiment_config,
)
from .harness import (
    append_convergence_column,
    directional_gradient_check,
    run_experiment,
    stress_test,
    write_stress,
)


def _add_shared(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--env", help="environment id (overrides config)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--method", choices=["ours-mala", "ours-rmh", "dr", "gd"])


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_experiment_config(args.config) if args.config else ExperimentConfig()
    if args.env is not None:
        cfg.environment = args.env
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.method is not None:
        cfg.method = args.method
    return cfg.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="faultline",
        description="Predict likely failure modes of simulated systems and repair designs against them.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run an experiment"),
        ("stress", "stress-test a design against prior samples"),
        ("convergence", "append per-round test costs to rounds.csv"),
        ("gradcheck", "finite-difference gradient checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_shared(p)
        if name == "stress":
            p.add_argument("--design", help="design.json path (default: OUT/design.json)")
            p.add_argument("--n-test", type=int, help="number of prior samples")
        if name == "gradcheck":
            p.add_argument("--points", type=int, default=100)

    args = parser.parse_args(argv)
    try:
        cfg = _experiment_config(args)
    except (ConfigError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    if args.command == "run":
        result = run_experiment(cfg)
        records = result["records"]
        print(f"run: {cfg.environment} / {cfg.method} / seed {cfg.seed}: "
              f"{len(records)} rounds, final best mean cost "
              f"{records[-1].best_mean_cost:.6g}")
        for name, path in result["artifacts"].items():
            print(f"  {name}: {path}")
        return 0

    env = build_environment(cfg)

    if args.command == "stress":
        from pathlib import Path
        design_path = args.design or str(Path(cfg.out_dir) / "design.json")
        try:
            with open(design_path, encoding="utf-8") as fh:
                design = np.asarray(json.load(fh)["values"], dtype=float)
        except (OSError, KeyError, ValueError) as err:
            print(f"error: cannot read design from {design_path}: {err}", file=sys.stderr)
            return 2
        failures = None
        failures_path = Path(cfg.out_dir) / "failures.json"
        if failures_path.exists():
            with open(failures_path, encoding="utf-8") as fh:
                failures = np.asarray(json.load(fh)["values"], dtype=float)
        n_test = args.n_test or cfg.n_test
        report = stress_test(env, design, n_test, cfg.seed,
                             predicted_failures=failures,
                             batch=cfg.stress_batch, workers=cfg.workers)
        path = write_stress(report, cfg.out_dir)
        print(f"stress: {n_test} samples -> {path}")
        for key, value in report.summary()["quantiles"].items():
            print(f"  {key}: {value:.6g}")
        if report.predicted_costs is not None:
            print(f"  max_predicted: {report.predicted_costs.max():.6g}")
        return 0

    if args.command == "convergence":
        from pathlib import Path
        rounds_path = Path(cfg.out_dir) / "rounds.csv"
        if not rounds_path.exists():
            print(f"error: {rounds_path} not found (run first)", file=sys.stderr)
            return 2
        col = append_convergence_column(env, rounds_path,
                                        cfg.convergence_points, cfg.convergence_seed)
        print(f"convergence: appended test_cost column "
              f"({col[0]:.6g} -> {col[-1]:.6g}) to {rounds_path}")
        return 0

    if args.command == "gradcheck":
        tol = 1e-3 if cfg.environment == "powergrid" else 1e-4
        report = directional_gradient_check(env, args.points, cfg.seed, rel_tol=tol)
        status = "PASS" if report["passed"] else "FAIL"
        print(f"gradcheck {cfg.environment}: {status} "
              f"(max rel err {report['max_rel_err']:.3e} over {report['n_points']} points, "
              f"tol {report['rel_tol']:g})")
        return 0 if report["passed"] else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
