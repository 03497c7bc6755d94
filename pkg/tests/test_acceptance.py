"""Acceptance suite: one test per headline criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

The coverage and convergence criteria share one experiment matrix (two
environments x {mala, rmh} x 4 seeds + DR), computed once per session.
Expect roughly an hour on two cores for the full module.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from faultline import autodiff as ad
from faultline.config import ExperimentConfig, build_environment
from faultline.envs import FormationConfig, FormationEnv, GridEnv, SearchConfig, SearchEnv, bundled_case
from faultline.harness import (
    convergence_eval,
    convergence_test_set,
    directional_gradient_check,
    run_experiment,
    stress_test,
)
from faultline.orchestrator import PredictRepairConfig, _chain_rng, predict_and_repair
from faultline.samplers import init_chain, mala_log_accept, mala_step, rmh_step

from conftest import QuadraticEnv, finite_difference_gradient
from test_env_powergrid import gauss_seidel_two_bus

SEEDS = (0, 1, 2, 3)
ENVS = ("formation", "search")
WORKERS = 2


def _report(name, passed, detail):
    print(f"\n[acceptance] {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# criterion 1: gradient fidelity


def test_gradient_fidelity_all_environments():
    t0 = time.time()
    details = []
    ok = True
    for name, env, tol in (
        ("search", SearchEnv(SearchConfig()), 1e-4),
        ("formation", FormationEnv(FormationConfig()), 1e-4),
        ("powergrid", GridEnv(bundled_case("case14")), 1e-3),
    ):
        rep = directional_gradient_check(env, n_points=100, seed=7, rel_tol=tol)
        ok = ok and rep["passed"]
        details.append(f"{name} max rel err {rep['max_rel_err']:.2e} (tol {tol:g})")
    elapsed = time.time() - t0
    ok = ok and elapsed < 300.0
    _report("gradient fidelity", ok, "; ".join(details) + f"; {elapsed:.0f}s (< 300s)")


# ---------------------------------------------------------------------------
# criterion 2: sampler correctness


class _AnalyticNormal:
    def log_density(self, v):
        return -0.5 * float(v @ v)

    def value_and_grad(self, v):
        v = np.asarray(v, dtype=float)
        return -0.5 * float(v @ v), -v


def test_sampler_correctness_five_dim():
    target = _AnalyticNormal()
    details = []
    ok = True
    for kernel, step in (("mala", mala_step), ("rmh", rmh_step)):
        rng = np.random.default_rng(0)
        state = init_chain(target, np.zeros(5), need_grad=(kernel == "mala"))
        samples = np.empty((100_000, 5))
        for i in range(100_000):
            state = step(state, target, 0.05, rng)
            samples[i] = state.position
        mean_err = float(np.abs(samples.mean(axis=0)).max())
        frob = float(np.linalg.norm(np.cov(samples.T) - np.eye(5)))
        ok = ok and mean_err < 0.05 and frob < 0.1
        details.append(f"{kernel}: |mean| {mean_err:.3f} (<0.05), cov frob {frob:.3f} (<0.1)")

    # detailed balance in log-space on 1000 random pairs
    rng = np.random.default_rng(3)
    tau = 0.05
    worst = 0.0
    for _ in range(1000):
        a = rng.standard_normal(5)
        b = rng.standard_normal(5)

        def log_k(u, v):
            lp_u, g_u = target.value_and_grad(u)
            lp_v, g_v = target.value_and_grad(v)
            log_q = -np.sum((v - u - tau * g_u) ** 2) / (4 * tau)
            ratio = mala_log_accept(u, lp_u, g_u, v, lp_v, g_v, tau)
            return log_q + min(0.0, ratio)

        lhs = target.log_density(a) + log_k(a, b)
        rhs = target.log_density(b) + log_k(b, a)
        worst = max(worst, abs(lhs - rhs))
    ok = ok and worst < 1e-10
    details.append(f"detailed balance residual {worst:.2e} (<1e-10)")
    _report("sampler correctness", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 3: power-flow oracle equivalence


def test_power_flow_oracle_equivalence():
    env2 = GridEnv(bundled_case("case2"))
    env14 = GridEnv(bundled_case("case14"))
    details = []

    # 2-bus vs an independent fixed-point solver
    rng = np.random.default_rng(11)
    worst_v = 0.0
    for _ in range(20):
        x = np.array([0.1, rng.uniform(0.95, 1.05),
                      rng.uniform(0.08, 0.12), rng.uniform(-0.02, 0.02)])
        y = np.array([rng.normal(1.6449, 1.0)])
        sol = env2.solve(x, y)
        scale = 1.0 / (1.0 + np.exp(-y[0]))
        y_line = scale * (env2.case.line_g_nom[0] + 1j * env2.case.line_b_nom[0])
        v2 = gauss_seidel_two_bus(x[2], x[3], x[1], y_line)
        worst_v = max(worst_v, abs(sol.v_mag[1] - abs(v2)),
                      abs(sol.theta[1] - np.angle(v2)))
    ok = worst_v < 1e-8
    details.append(f"2-bus vs fixed-point oracle: {worst_v:.2e} (<1e-8)")

    # 14-bus: independent residual re-evaluation
    rng = np.random.default_rng(12)
    worst_res = 0.0
    checked = 0
    while checked < 20:
        x = env14.prior_x.sample(rng)
        y = env14.prior_y.sample(rng)
        try:
            sol = env14.solve(x, y)
        except Exception:
            continue
        worst_res = max(worst_res, env14.mismatch_residual(x, y, sol))
        checked += 1
    ok = ok and worst_res < 1e-8
    details.append(f"14-bus independent residual: {worst_res:.2e} (<1e-8)")

    # 2-bus adjoint gradient vs central finite differences
    x = np.array([0.1, 1.01, 0.11, 0.01])
    y = np.array([0.5])
    _, gx, gy = env2.cost_and_gradients(x, y)
    joint = np.concatenate([x, y])
    fd = finite_difference_gradient(
        lambda v: float(env2.simulate_cost(v[:4], v[4:])), joint, h=1e-6)
    got = np.concatenate([gx, gy])
    mask = np.abs(fd) > 1e-9
    rel = float((np.abs(got - fd)[mask] / np.abs(fd)[mask]).max())
    ok = ok and rel < 1e-6
    details.append(f"2-bus adjoint vs FD rel err: {rel:.2e} (<1e-6)")
    _report("power-flow oracle equivalence", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# shared experiment matrix for criteria 4 and 5


@pytest.fixture(scope="module")
def experiment_matrix(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_runs")
    matrix = {}
    for env_name in ENVS:
        per_env = {"runs": {}, "run_seconds": {}}
        for method in ("ours-mala", "ours-rmh"):
            for seed in SEEDS:
                cfg = ExperimentConfig(environment=env_name, method=method,
                                       seed=seed, workers=WORKERS,
                                       out_dir=str(root / env_name / f"{method}-{seed}"))
                env = build_environment(cfg)
                t0 = time.time()
                result = run_experiment(cfg, env=env)
                elapsed = time.time() - t0
                designs = np.stack([r.best_design for r in result["records"]])
                test_set = convergence_test_set(env, cfg.convergence_points,
                                                cfg.convergence_seed)
                conv = convergence_eval(env, designs, test_set)
                per_env["runs"][(method, seed)] = {
                    "design": result["best_design"],
                    "failures": result["failures"],
                    "convergence": conv,
                }
                per_env["run_seconds"][(method, seed)] = elapsed
        cfg = ExperimentConfig(environment=env_name, method="dr", seed=0,
                               workers=WORKERS,
                               out_dir=str(root / env_name / "dr-0"))
        env = build_environment(cfg)
        t0 = time.time()
        result = run_experiment(cfg, env=env)
        per_env["run_seconds"][("dr", 0)] = time.time() - t0
        n_y = cfg.run_params["n_failures"]
        rounds = cfg.run_params["rounds"]
        dr_failures = np.stack([env.prior_y.sample(_chain_rng(0, rounds, 3, j))
                                for j in range(n_y)])
        per_env["runs"][("dr", 0)] = {
            "design": result["best_design"],
            "failures": dr_failures,
        }
        per_env["env"] = env
        per_env["n_test"] = cfg.n_test
        matrix[env_name] = per_env
    return matrix


def test_failure_coverage(experiment_matrix):
    details = []
    ours_ok = True
    dr_failures = 0
    for env_name in ENVS:
        per_env = experiment_matrix[env_name]
        env = per_env["env"]
        t0 = time.time()
        stress_seconds = 0.0
        for method in ("ours-mala", "ours-rmh", "dr"):
            run = per_env["runs"][(method, 0)]
            report = stress_test(env, run["design"], per_env["n_test"], seed=0,
                                 predicted_failures=run["failures"],
                                 workers=WORKERS)
            max_pred = float(report.predicted_costs.max())
            p99 = report.quantiles["p99"]
            covered = max_pred >= p99
            if method == "dr":
                dr_failures += not covered
            else:
                ours_ok = ours_ok and covered
            details.append(f"{env_name}/{method}: max pred {max_pred:.3f} "
                           f"{'>=' if covered else '<'} p99 {p99:.3f}")
        stress_seconds = time.time() - t0
        env_runtime = (per_env["run_seconds"][("ours-mala", 0)]
                       + per_env["run_seconds"][("ours-rmh", 0)]
                       + per_env["run_seconds"][("dr", 0)] + stress_seconds)
        ok_time = env_runtime < 3600.0
        ours_ok = ours_ok and ok_time
        details.append(f"{env_name} runtime {env_runtime:.0f}s (<3600s)")
    ok = ours_ok and dr_failures >= 1
    details.append(f"dr misses the tail on {dr_failures} environment(s) (need >=1)")
    _report("failure coverage", ok, "; ".join(details))


def test_convergence_advantage(experiment_matrix):
    details = []
    ok = True
    for env_name in ENVS:
        per_env = experiment_matrix[env_name]
        speed_hits = 0
        final_hits = 0
        for seed in SEEDS:
            mala = per_env["runs"][("ours-mala", seed)]["convergence"]
            rmh = per_env["runs"][("ours-rmh", seed)]["convergence"]
            rounds = mala.shape[0]
            reach = np.flatnonzero(mala <= rmh[-1])
            if reach.size > 0 and (reach[0] + 1) <= 0.5 * rounds:
                speed_hits += 1
            if mala[-1] <= rmh[-1]:
                final_hits += 1
        env_ok = speed_hits >= 2 and final_hits >= 3
        ok = ok and env_ok
        details.append(f"{env_name}: reaches rmh final in <=K/2 rounds on "
                       f"{speed_hits}/4 seeds (need >=2), final <= rmh on "
                       f"{final_hits}/4 (need >=3)")
    _report("convergence advantage", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 6: tempering sanity


def test_tempering_sanity():
    env = QuadraticEnv(dim=2)
    n = 500  # chains per population; both populations pooled -> 1000 samples
    cfg = PredictRepairConfig(n_designs=n, n_failures=n, rounds=4, substeps=8,
                              stepsize_x=0.3, stepsize_y=0.3, seed=77,
                              lambda_override=(0.0, 0.0, 0.0, 0.0))
    best, failures, records = predict_and_repair(env, cfg)
    samples = failures.members
    assert samples.shape == (n, 2)
    pooled = samples.ravel()
    m = pooled.size
    mean_limit = 3.0 / math.sqrt(m)
    var_limit = 3.0 * math.sqrt(2.0 / m)
    mean_err = abs(float(pooled.mean()))
    var_err = abs(float(pooled.var()) - 1.0)
    ok = mean_err < mean_limit and var_err < var_limit
    _report("tempering sanity", ok,
            f"|mean| {mean_err:.4f} < {mean_limit:.4f}, "
            f"|var-1| {var_err:.4f} < {var_limit:.4f} over {m} draws")


# ---------------------------------------------------------------------------
# criterion 7: determinism


def test_run_determinism(tmp_path):
    base = {
        "environment": "search",
        "env_options": {"n_seekers": "2", "n_hiders": "2", "horizon": "5.0"},
        "run_options": dict(rounds=4, substeps=3, n_designs=3, n_failures=3,
                            quench_rounds=2),
    }
    blobs = []
    for tag in ("a", "b"):
        cfg = ExperimentConfig(environment=base["environment"], method="ours-mala",
                               seed=42, workers=1, out_dir=str(tmp_path / tag))
        cfg.env_options.update(base["env_options"])
        cfg.run_options.update(base["run_options"])
        run_experiment(cfg)
        blobs.append((tmp_path / tag / "rounds.csv").read_bytes())
    same = blobs[0] == blobs[1]

    # also across worker counts on the power grid
    grids = []
    for tag, workers in (("g1", 1), ("g2", 2)):
        cfg = ExperimentConfig(environment="powergrid", method="ours-mala",
                               seed=5, workers=workers, out_dir=str(tmp_path / tag))
        cfg.env_options["case"] = "case2"
        cfg.run_options.update(dict(rounds=3, substeps=2, n_designs=3,
                                    n_failures=3, quench_rounds=1))
        run_experiment(cfg)
        grids.append((tmp_path / tag / "rounds.csv").read_bytes())
    same_grid = grids[0] == grids[1]
    ok = same and same_grid
    _report("determinism", ok,
            f"search rerun byte-identical: {same}; "
            f"powergrid across worker counts: {same_grid}")
