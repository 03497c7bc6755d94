"""Scikit-learn style front ends for the sampling engine.

Hyperparameters live in ``__init__`` (so ``get_params`` / ``set_params`` /
``clone`` work), ``fit(env)`` runs the algorithm against an environment,
and results land in trailing-underscore attributes.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .orchestrator import (
    PredictRepairConfig,
    baseline_dr,
    baseline_gd,
    predict_and_repair,
)


class PredictRepair(BaseEstimator):
    """Alternating failure-prediction and design-repair sampler.

    Parameters mirror :class:`~faultline.orchestrator.PredictRepairConfig`;
    ``stepsize_y=None`` reuses ``stepsize``.

    Attributes after ``fit``:
        design_: best design vector found.
        failures_: (n_failures, dim_y) final predicted failure scenarios.
        records_: list of per-round :class:`RoundRecord`.
    """

    def __init__(self, kernel="mala", n_designs=10, n_failures=10, rounds=50,
                 substeps=10, stepsize=1e-2, stepsize_y=None, quench_rounds=0,
                 temper_rate=5.0, stale_designs=False, seed=0, workers=1):
        self.kernel = kernel
        self.n_designs = n_designs
        self.n_failures = n_failures
        self.rounds = rounds
        self.substeps = substeps
        self.stepsize = stepsize
        self.stepsize_y = stepsize_y
        self.quench_rounds = quench_rounds
        self.temper_rate = temper_rate
        self.stale_designs = stale_designs
        self.seed = seed
        self.workers = workers

    def _config(self) -> PredictRepairConfig:
        return PredictRepairConfig(
            n_designs=self.n_designs,
            n_failures=self.n_failures,
            rounds=self.rounds,
            substeps=self.substeps,
            stepsize_x=self.stepsize,
            stepsize_y=self.stepsize if self.stepsize_y is None else self.stepsize_y,
            quench_rounds=self.quench_rounds,
            temper_rate=self.temper_rate,
            kernel=self.kernel,
            seed=self.seed,
            stale_designs=self.stale_designs,
            workers=self.workers,
        )

    def fit(self, env, y=None):
        best, failure_pop, records = predict_and_repair(env, self._config())
        self.design_ = best
        self.failures_ = failure_pop.members
        self.records_ = records
        return self


class DomainRandomization(PredictRepair):
    """Baseline: gradient descent on the expected cost under the prior.

    Disturbances are resampled from the prior every round; there is no
    adversarial adaptation.  ``kernel``/``temper_rate`` are ignored.
    """

    def fit(self, env, y=None):
        best, records = baseline_dr(env, self._config())
        self.design_ = best
        self.failures_ = None
        self.records_ = records
        return self


class AlternatingDescent(PredictRepair):
    """Baseline: alternating local gradient descent for both populations."""

    def fit(self, env, y=None):
        best, failure_pop, records = baseline_gd(env, self._config())
        self.design_ = best
        self.failures_ = failure_pop.members
        self.records_ = records
        return self
