"""Alternating repair/failure sampling with tempering and quenching.

One run keeps two populations of parallel MCMC chains: candidate designs
``x`` and candidate failure scenarios ``y``.  Each round first advances
every design chain against the repair pseudo-posterior (prior times
exp(-mean cost over current failures)), then advances every failure chain
against the failure pseudo-posterior (prior times exp(+min cost over the
updated designs)).  A tempering exponent ``lambda_i`` ramps the cost terms
in from the prior, and the last ``quench_rounds`` rounds switch both
populations to plain gradient ascent to polish solutions.

Two reference baselines reuse the same engine: domain randomization
(fresh prior-sampled failures every round, design GD on the mean cost)
and alternating gradient descent (GD kernels for both populations,
``lambda = 1`` throughout).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .samplers import KernelConfig, init_chain, run_chain
from .validation import check_matrix, check_stepsize, check_vector


@dataclass
class Population:
    """Parameter vectors of parallel chains plus the shared cost table."""

    members: np.ndarray               # (n, dim)
    costs: np.ndarray | None = None   # (n_designs, n_failures), shared cache

    def __post_init__(self):
        self.members = check_matrix(self.members, name="population members")

    def __len__(self):
        return self.members.shape[0]


@dataclass
class PredictRepairConfig:
    """Run parameters for the alternating sampler and its baselines."""

    n_designs: int = 10
    n_failures: int = 10
    rounds: int = 50
    substeps: int = 10
    stepsize_x: float | np.ndarray = 1e-2
    stepsize_y: float | np.ndarray = 1e-2
    quench_rounds: int = 0
    temper_rate: float = 5.0
    kernel: str = "mala"
    seed: int = 0
    stale_designs: bool = False
    # failure chains target the round's best design (the prediction
    # distribution conditions on one design); True restores the literal
    # min-over-the-whole-population coupling
    population_min: bool = False
    workers: int = 1
    # test hook: fixed tempering values (length ``rounds``) overriding the
    # exponential schedule, e.g. all zeros for prior-sanity checks
    lambda_override: tuple | None = None

    def __post_init__(self):
        for name in ("n_designs", "n_failures", "rounds", "substeps"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name}: must be >= 1")
            setattr(self, name, int(getattr(self, name)))
        if not 0 <= int(self.quench_rounds) <= self.rounds:
            raise ValueError("quench_rounds: must lie in [0, rounds]")
        self.quench_rounds = int(self.quench_rounds)
        if self.temper_rate < 0:
            raise ValueError("temper_rate: must be >= 0")
        self.stepsize_x = check_stepsize(self.stepsize_x, name="stepsize_x")
        self.stepsize_y = check_stepsize(self.stepsize_y, name="stepsize_y")
        if self.kernel not in ("mala", "rmh"):
            raise ValueError(f"kernel: expected 'mala' or 'rmh', got {self.kernel!r}")
        if int(self.workers) < 1:
            raise ValueError("workers: must be >= 1")
        self.workers = int(self.workers)
        if self.lambda_override is not None and len(self.lambda_override) != self.rounds:
            raise ValueError("lambda_override: need one value per round")


@dataclass
class RoundRecord:
    """Per-round log: tempering value, best design, and chain health."""

    round_index: int
    lam: float
    best_design: np.ndarray
    best_mean_cost: float
    accept_x: tuple
    accept_y: tuple
    wall_clock_s: float = field(default=0.0, compare=False)


class ChainStuckError(RuntimeError):
    """A chain's target is -inf at its current position and cannot move."""


def tempering_schedule(i: int, rounds: int, rate: float) -> float:
    """``lambda_i = exp(-rate * (K - i) / K)``: nondecreasing, ends at 1."""
    if not 1 <= i <= rounds:
        raise ValueError(f"tempering_schedule: round {i} outside 1..{rounds}")
    return math.exp(-rate * (rounds - i) / rounds)


def risk_adjusted_cost(env, x, y):
    """Cost of the simulated behavior plus the disturbance's prior log-density.

    High values mean failures that are both severe and plausible.
    """
    return ad.add(env.simulate_cost(x, y), env.prior_y.log_density(y))


def failure_log_density(env, designs, y, lam: float):
    """Log of the failure pseudo-posterior (up to a constant).

    ``prior_y(y) + lam * min over designs of cost(x, y)``; the min is the
    hard minimum with the engine's first-index subgradient.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("failure_log_density: lam must lie in [0, 1]")
    members = designs.members if isinstance(designs, Population) else np.asarray(designs, float)
    prior = env.prior_y.log_density(y)
    if lam == 0.0:
        return prior
    costs = env.cost_vs_designs(members, y)
    return ad.add(prior, ad.mul(lam, ad.amin(costs)))


def repair_log_density(env, failures, x, lam: float):
    """Log of the repair pseudo-posterior (up to a constant).

    ``prior_x(x) - (lam / n_failures) * sum of cost(x, y_i)``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("repair_log_density: lam must lie in [0, 1]")
    members = failures.members if isinstance(failures, Population) else np.asarray(failures, float)
    prior = env.prior_x.log_density(x)
    if lam == 0.0:
        return prior
    costs = env.cost_vs_failures(x, members)
    return ad.add(prior, ad.mul(-lam / members.shape[0], ad.sum(costs)))


class _PopulationTarget:
    """Shared machinery: lazy opponent precompute that survives pickling."""

    def __init__(self, env, opponents: np.ndarray, lam: float):
        self.env = env
        self.opponents = np.asarray(opponents, dtype=float)
        self.lam = lam
        self._cost_fn = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cost_fn"] = None  # rebuilt lazily in the worker
        return state

    def log_density(self, v) -> float:
        out = self._expr(np.asarray(v, dtype=float))
        return float(out.value if isinstance(out, ad.Node) else out)

    def value_and_grad(self, v):
        res = ad.value_and_grad(self._expr, v)
        return res.value, res.gradient


class RepairTarget(_PopulationTarget):
    """Sampling target for design chains (failure population fixed)."""

    def _expr(self, x):
        prior = self.env.prior_x.log_density(x)
        if self.lam == 0.0:
            return prior
        if self._cost_fn is None:
            self._cost_fn = self.env.make_repair_cost(self.opponents)
        costs = self._cost_fn(x)
        return ad.add(prior, ad.mul(-self.lam / self.opponents.shape[0], ad.sum(costs)))


class FailureTarget(_PopulationTarget):
    """Sampling target for failure chains (design population fixed)."""

    def _expr(self, y):
        prior = self.env.prior_y.log_density(y)
        if self.lam == 0.0:
            return prior
        if self._cost_fn is None:
            self._cost_fn = self.env.make_failure_cost(self.opponents)
        costs = self._cost_fn(y)
        return ad.add(prior, ad.mul(self.lam, ad.amin(costs)))


def _chain_rng(seed: int, round_index: int, side: int, chain: int) -> np.random.Generator:
    """Independent, reproducible stream per (round, population, chain)."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=(int(seed), int(round_index), int(side), int(chain)))
    ))


def _advance_one(args):
    target, position, kcfg, seed_tuple, label = args
    state = init_chain(target, position, need_grad=(kcfg.kernel != "rmh"))
    if state.log_density == -math.inf:
        raise ChainStuckError(
            f"{label}: log-density is -inf at the current position; chain cannot move"
        )
    state = run_chain(state, target, kcfg, _chain_rng(*seed_tuple))
    return state.position, state.accept_fraction


def _advance_population(target, members, kcfg, seed, round_index, side, label, pool):
    tasks = [
        (target, members[j], kcfg, (seed, round_index, side, j), f"{label} chain {j}")
        for j in range(members.shape[0])
    ]
    if pool is None:
        results = [_advance_one(t) for t in tasks]
    else:
        results = list(pool.map(_advance_one, tasks))
    new_members = np.stack([r[0] for r in results])
    accepts = tuple(float(r[1]) for r in results)
    return new_members, accepts


def select_best_design(env, designs, failures) -> np.ndarray:
    """Member maximizing the repair log-density at lambda = 1 (first on ties)."""
    d_members = designs.members if isinstance(designs, Population) else check_matrix(designs, name="designs")
    f_members = failures.members if isinstance(failures, Population) else check_matrix(failures, name="failures")
    if len(d_members) == 0 or len(f_members) == 0:
        raise ValueError("select_best_design: populations must be nonempty")
    costs = (designs.costs if isinstance(designs, Population) and designs.costs is not None
             else env.cost_matrix(d_members, f_members))
    priors = np.array([float(env.prior_x.log_density(d_members[j]))
                       for j in range(d_members.shape[0])])
    scores = priors - costs.mean(axis=1)
    return d_members[int(np.argmax(scores))].copy()


def _initial_population(prior, n, seed, side) -> np.ndarray:
    return np.stack([prior.sample(_chain_rng(seed, 0, side, j)) for j in range(n)])


def _run_rounds(env, config: PredictRepairConfig, domain_randomization: bool):
    """Shared engine behind the sampler and its baselines."""
    designs = _initial_population(env.prior_x, config.n_designs, config.seed, side=0)
    failures = _initial_population(env.prior_y, config.n_failures, config.seed, side=1)

    records: list[RoundRecord] = []
    targeted_best = None
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for i in range(1, config.rounds + 1):
            t0 = time.perf_counter()
            if config.lambda_override is not None:
                lam = float(config.lambda_override[i - 1])
            else:
                lam = tempering_schedule(i, config.rounds, config.temper_rate)
            quenching = i > config.rounds - config.quench_rounds
            kernel = "gd" if quenching else config.kernel

            if domain_randomization:
                # fresh disturbances from the prior every round; no adaptation
                lam, kernel = 1.0, "gd"
                failures = np.stack([
                    env.prior_y.sample(_chain_rng(config.seed, i, 3, j))
                    for j in range(config.n_failures)
                ])

            kcfg_x = KernelConfig(config.stepsize_x, config.substeps, kernel)
            previous_designs = designs
            designs, accept_x = _advance_population(
                RepairTarget(env, failures, lam), designs, kcfg_x,
                config.seed, i, 0, "design", pool,
            )

            accept_y = ()
            if not domain_randomization:
                opponents = previous_designs if config.stale_designs else designs
                if not config.population_min:
                    # prediction conditions on the best design of the sweep
                    # (the argmax of the repair density that just ran)
                    targeted_best = select_best_design(
                        env, Population(opponents, env.cost_matrix(opponents, failures)),
                        Population(failures))
                    opponents = targeted_best[None, :]
                kcfg_y = KernelConfig(config.stepsize_y, config.substeps, kernel)
                failures, accept_y = _advance_population(
                    FailureTarget(env, opponents, lam), failures, kcfg_y,
                    config.seed, i, 1, "failure", pool,
                )

            costs = env.cost_matrix(designs, failures)
            priors = np.array([float(env.prior_x.log_density(designs[j]))
                               for j in range(config.n_designs)])
            best_idx = int(np.argmax(priors - costs.mean(axis=1)))
            records.append(RoundRecord(
                round_index=i,
                lam=lam,
                best_design=designs[best_idx].copy(),
                best_mean_cost=float(costs[best_idx].mean()),
                accept_x=accept_x,
                accept_y=accept_y,
                wall_clock_s=time.perf_counter() - t0,
            ))
    finally:
        if pool is not None:
            pool.shutdown()

    design_pop = Population(designs, costs)
    failure_pop = Population(failures)
    if targeted_best is not None:
        # the argmax of the final repair density: exactly the design the
        # final failure sweep conditioned on
        best = targeted_best
    else:
        best = select_best_design(env, design_pop, failure_pop)
    return best, failure_pop, records


def predict_and_repair(env, config: PredictRepairConfig):
    """Run the alternating failure-prediction / repair sampler.

    Returns ``(best_design, failure_population, round_records)``.
    """
    return _run_rounds(env, config, domain_randomization=False)


def baseline_dr(env, config: PredictRepairConfig):
    """Domain-randomization baseline: GD on the mean cost over fresh
    prior-sampled disturbances each round.  Returns ``(best_design, records)``."""
    best, _, records = _run_rounds(env, config, domain_randomization=True)
    return best, records


def baseline_gd(env, config: PredictRepairConfig):
    """Alternating local gradient descent over both populations, lambda = 1.

    Definitionally ``predict_and_repair`` with every round quenched and
    tempering disabled.
    """
    cfg = PredictRepairConfig(
        n_designs=config.n_designs, n_failures=config.n_failures,
        rounds=config.rounds, substeps=config.substeps,
        stepsize_x=config.stepsize_x, stepsize_y=config.stepsize_y,
        quench_rounds=config.rounds, temper_rate=0.0, kernel=config.kernel,
        seed=config.seed, stale_designs=config.stale_designs,
        workers=config.workers,
    )
    return _run_rounds(env, cfg, domain_randomization=False)
