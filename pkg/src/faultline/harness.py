"""Experiment execution and artifact emission (CSV / JSON).

One ``run`` produces, inside the output directory:

* ``rounds.csv``   -- one row per round: ``round``, ``lambda``,
  ``best_mean_cost``, per-chain acceptance rates, then the full best
  design vector (``best_0..``).  Deterministic for a fixed seed, so the
  wall-clock column of the in-memory records is deliberately not written.
* ``design.json``  -- final best design vector.
* ``failures.json``-- final predicted-failure vectors (absent for DR).

``stress`` evaluates a design against fresh prior samples and writes
``stress.csv`` (columns ``source,index,cost`` where source is
``predicted`` or ``test``) plus ``stress_summary.json`` with quantiles.

``convergence`` appends a ``test_cost`` column to ``rounds.csv``: the
mean cost of each round's best design over a fixed 100-sample test set
shared by every method (its RNG stream is independent of the run seed).

All numbers are written with ``repr`` (shortest round-trip), so reruns
with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_environment
from .orchestrator import (
    PredictRepairConfig,
    RoundRecord,
    baseline_dr,
    baseline_gd,
    predict_and_repair,
)
from .validation import check_vector

_QUANTILES = (50.0, 90.0, 99.0)


def _fmt(x: float) -> str:
    return repr(float(x))


def _run_config(cfg: ExperimentConfig) -> PredictRepairConfig:
    kernel = "rmh" if cfg.method == "ours-rmh" else "mala"
    params = cfg.run_params
    return PredictRepairConfig(
        n_designs=params["n_designs"], n_failures=params["n_failures"],
        rounds=params["rounds"], substeps=params["substeps"],
        stepsize_x=params["stepsize_x"], stepsize_y=params["stepsize_y"],
        quench_rounds=params["quench_rounds"], temper_rate=params["temper_rate"],
        kernel=kernel, seed=cfg.seed, workers=cfg.workers,
    )


def write_rounds_csv(path, records: list[RoundRecord], extra: dict | None = None):
    """``extra`` maps column name -> per-round values (e.g. test_cost)."""
    n_x = len(records[0].accept_x)
    n_y = len(records[0].accept_y)
    dim = records[0].best_design.shape[0]
    header = (["round", "lambda", "best_mean_cost"]
              + [f"accept_x_{j}" for j in range(n_x)]
              + [f"accept_y_{j}" for j in range(n_y)]
              + [f"best_{k}" for k in range(dim)])
    extra = extra or {}
    header += list(extra)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, rec in enumerate(records):
            row = ([str(rec.round_index), _fmt(rec.lam), _fmt(rec.best_mean_cost)]
                   + [_fmt(a) for a in rec.accept_x]
                   + [_fmt(a) for a in rec.accept_y]
                   + [_fmt(v) for v in rec.best_design])
            row += [_fmt(extra[name][i]) for name in extra]
            writer.writerow(row)


def read_rounds_csv(path):
    """-> (records-as-dicts list, best-design matrix (K, dim))."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty rounds file")
    dim = sum(1 for c in rows[0] if c.startswith("best_") and c != "best_mean_cost")
    designs = np.array([[float(r[f"best_{k}"]) for k in range(dim)] for r in rows])
    return rows, designs


def _write_vector_json(path, name, values):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({name: [float(v) for v in values]}, fh)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig, env=None) -> dict:
    """Execute one experiment; writes artifacts and returns their paths."""
    cfg.validate()
    env = env or build_environment(cfg)
    run_cfg = _run_config(cfg)
    if cfg.method == "dr":
        best, records = baseline_dr(env, run_cfg)
        failures = None
    elif cfg.method == "gd":
        best, failure_pop, records = baseline_gd(env, run_cfg)
        failures = failure_pop.members
    else:
        best, failure_pop, records = predict_and_repair(env, run_cfg)
        failures = failure_pop.members

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rounds_csv(out / "rounds.csv", records)
    _write_vector_json(out / "design.json", "values", best)
    artifacts = {"rounds": out / "rounds.csv", "design": out / "design.json"}
    if failures is not None:
        with open(out / "failures.json", "w", encoding="utf-8") as fh:
            json.dump({"values": [[float(v) for v in row] for row in failures]}, fh)
            fh.write("\n")
        artifacts["failures"] = out / "failures.json"
    return {"artifacts": artifacts, "best_design": best, "records": records,
            "failures": failures}


@dataclass
class StressReport:
    design: np.ndarray
    predicted_costs: np.ndarray | None
    test_costs: np.ndarray
    quantiles: dict

    def summary(self) -> dict:
        return {
            "n_test": int(self.test_costs.size),
            "quantiles": self.quantiles,
            "max_predicted": (None if self.predicted_costs is None
                              else float(self.predicted_costs.max())),
        }


def _stress_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=(int(seed), 0xDEAD))))


def _batch_costs(args):
    env, design, rows = args
    return np.asarray(env.cost_vs_failures(design, rows), dtype=float)


def stress_test(env, design, n_test: int, seed: int,
                predicted_failures=None, batch: int = 200,
                workers: int = 1) -> StressReport:
    """Evaluate a design against ``n_test`` prior-sampled disturbances."""
    if n_test < 1:
        raise ValueError("stress_test: n_test must be >= 1")
    design = check_vector(design, dim=env.dim_x, name="design")
    rng = _stress_rng(seed)
    samples = np.stack([env.prior_y.sample(rng) for _ in range(n_test)])
    chunks = [samples[i:i + batch] for i in range(0, n_test, batch)]
    tasks = [(env, design, chunk) for chunk in chunks]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_batch_costs, tasks))
    else:
        parts = [_batch_costs(t) for t in tasks]
    test_costs = np.concatenate(parts)

    predicted_costs = None
    if predicted_failures is not None:
        rows = np.asarray(predicted_failures, dtype=float)
        predicted_costs = np.asarray(env.cost_vs_failures(design, rows), dtype=float)

    quantiles = {f"p{int(q)}": float(np.percentile(test_costs, q)) for q in _QUANTILES}
    quantiles["max"] = float(test_costs.max())
    return StressReport(design, predicted_costs, test_costs, quantiles)


def write_stress(report: StressReport, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stress.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "index", "cost"])
        if report.predicted_costs is not None:
            for i, c in enumerate(report.predicted_costs):
                writer.writerow(["predicted", str(i), _fmt(c)])
        for i, c in enumerate(report.test_costs):
            writer.writerow(["test", str(i), _fmt(c)])
    with open(out / "stress_summary.json", "w", encoding="utf-8") as fh:
        json.dump(report.summary(), fh, indent=2)
        fh.write("\n")
    return out / "stress.csv"


def convergence_test_set(env, n_points: int, seed: int) -> np.ndarray:
    """The fixed disturbance test set shared by all methods."""
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=(int(seed), 0xC0FFEE))))
    return np.stack([env.prior_y.sample(rng) for _ in range(n_points)])


def convergence_eval(env, best_designs: np.ndarray, test_set: np.ndarray) -> np.ndarray:
    """Mean test-set cost of each round's best design."""
    out = np.empty(best_designs.shape[0])
    for i in range(best_designs.shape[0]):
        costs = np.asarray(env.cost_vs_failures(best_designs[i], test_set), dtype=float)
        out[i] = costs.mean()
    return out


def append_convergence_column(env, rounds_path, n_points: int, seed: int):
    """Recompute the test-cost column and rewrite rounds.csv with it."""
    rows, designs = read_rounds_csv(rounds_path)
    test_set = convergence_test_set(env, n_points, seed)
    col = convergence_eval(env, designs, test_set)
    header = [c for c in rows[0].keys() if c != "test_cost"]
    with open(rounds_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header + ["test_cost"])
        for i, row in enumerate(rows):
            writer.writerow([row[c] for c in header] + [_fmt(col[i])])
    return col


def directional_gradient_check(env, n_points: int, seed: int,
                               n_directions: int = 3, step: float = 1e-5,
                               rel_tol: float = 1e-4) -> dict:
    """Central finite differences along random unit directions vs the engine.

    Checks the joint gradient of the cost in (x, y) at prior samples.  A
    power-grid point whose solve does not converge is resampled (the cost
    there is the constant divergence penalty, not a differentiable value).
    """
    from . import autodiff as ad

    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=(int(seed), 0xFD))))
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < n_points:
        attempts += 1
        if attempts > 20 * n_points:
            raise RuntimeError("gradient check: too many resampled points")
        x = env.prior_x.sample(rng)
        y = env.prior_y.sample(rng)
        joint = np.concatenate([x, y])

        def expr(v):
            return env.simulate_cost(v[:env.dim_x], v[env.dim_x:])

        try:
            res = ad.value_and_grad(expr, joint)
        except ad.AutodiffError:
            continue
        hit_boundary = False
        for _ in range(n_directions):
            d = rng.standard_normal(joint.shape[0])
            d /= np.linalg.norm(d)
            up = expr(joint + step * d)
            dn = expr(joint - step * d)
            if not (math.isfinite(up) and math.isfinite(dn)):
                hit_boundary = True
                break
            fd = (up - dn) / (2.0 * step)
            an = float(res.gradient @ d)
            err = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            worst = max(worst, err)
        if hit_boundary:
            continue
        checked += 1
    return {"max_rel_err": worst, "n_points": checked, "passed": worst < rel_tol,
            "rel_tol": rel_tol}
