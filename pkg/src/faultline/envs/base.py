"""Uniform environment contract plus shared trajectory utilities.

An environment binds a differentiable simulator, a cost function, and the
prior distributions of its design vector ``x`` and exogenous vector ``y``.
The cost entry points accept graph nodes or plain arrays; with plain
arrays they evaluate eagerly in numpy.

Batched hooks (`cost_vs_failures`, `cost_vs_designs`, `cost_matrix`) exist
because the sampling targets always pit one variable vector against a
fixed population; environments override them with vectorized versions,
and the default implementations just loop ``simulate_cost``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any

import numpy as np

from .. import autodiff as ad
from ..validation import check_matrix, check_vector


@dataclass
class Trajectory:
    """Time-indexed simulation trace; ``states`` is environment-specific."""

    times: np.ndarray
    states: Any

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("Trajectory: times must be a nonempty 1-D array")
        if self.times.size > 1:
            steps = np.diff(self.times)
            if not np.all(steps > 0):
                raise ValueError("Trajectory: times must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
                raise ValueError("Trajectory: times must use a uniform step")


class Environment:
    """Base contract: dims, priors, differentiable cost, trace."""

    dim_x: int
    dim_y: int
    prior_x: Any
    prior_y: Any

    def simulate_cost(self, x, y):
        """Differentiable scalar cost of one (design, disturbance) pair."""
        raise NotImplementedError

    def trace(self, x, y) -> Trajectory:
        raise NotImplementedError

    # -- batched hooks ----------------------------------------------------

    def cost_vs_failures(self, x, failures):
        """Vector of costs of design ``x`` against each row of ``failures``."""
        failures = check_matrix(failures, cols=self.dim_y, name="failures")
        costs = [self.simulate_cost(x, failures[i]) for i in range(failures.shape[0])]
        return ad.stack(costs) if any(isinstance(c, ad.Node) for c in costs) \
            else np.asarray(costs, dtype=float)

    def cost_vs_designs(self, designs, y):
        """Vector of costs of each design row against disturbance ``y``."""
        designs = check_matrix(designs, cols=self.dim_x, name="designs")
        costs = [self.simulate_cost(designs[i], y) for i in range(designs.shape[0])]
        return ad.stack(costs) if any(isinstance(c, ad.Node) for c in costs) \
            else np.asarray(costs, dtype=float)

    def cost_matrix(self, designs, failures) -> np.ndarray:
        """Plain (n_designs, n_failures) cost table; never differentiable."""
        designs = check_matrix(designs, cols=self.dim_x, name="designs")
        failures = check_matrix(failures, cols=self.dim_y, name="failures")
        out = np.empty((designs.shape[0], failures.shape[0]))
        for j in range(failures.shape[0]):
            col = self.cost_vs_designs(designs, failures[j])
            out[:, j] = col.value if isinstance(col, ad.Node) else col
        return out

    def make_repair_cost(self, failures):
        """Callable ``x -> costs`` with the failure population held fixed.

        Sampling sweeps evaluate the same opponent population many times;
        environments override this to precompute its trajectories once.
        """
        failures = check_matrix(failures, cols=self.dim_y, name="failures")
        return lambda x: self.cost_vs_failures(x, failures)

    def make_failure_cost(self, designs):
        """Callable ``y -> costs`` with the design population held fixed."""
        designs = check_matrix(designs, cols=self.dim_x, name="designs")
        return lambda y: self.cost_vs_designs(designs, y)

    def validate_design(self, x) -> np.ndarray:
        return check_vector(x, dim=self.dim_x, name="design")

    def validate_disturbance(self, y) -> np.ndarray:
        return check_vector(y, dim=self.dim_y, name="disturbance")


def bernstein_matrix(t: np.ndarray, n_points: int) -> np.ndarray:
    """Bernstein basis values, shape (len(t), n_points), degree n_points-1."""
    t = np.asarray(t, dtype=float)[:, None]
    n = n_points - 1
    j = np.arange(n_points)[None, :]
    binom = np.array([math.comb(n, k) for k in range(n_points)])[None, :]
    return binom * (1.0 - t) ** (n - j) * t ** j


def bezier_eval(control_points, t: float):
    """Point on the Bezier curve defined by ``control_points`` at ``t``.

    ``t`` is the normalized curve parameter; values outside [0, 1] are
    clamped (with a warning) because simulation time maps affinely onto
    [0, 1] over the horizon.
    """
    pts = control_points.value if isinstance(control_points, ad.Node) else np.asarray(control_points, float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("bezier_eval: need at least 2 control points of equal dimension")
    if t < 0.0 or t > 1.0:
        warnings.warn(f"bezier_eval: parameter {t} outside [0, 1]; clamping", stacklevel=2)
        t = min(max(t, 0.0), 1.0)
    basis = bernstein_matrix(np.array([t]), pts.shape[0])[0]
    if isinstance(control_points, ad.Node):
        return ad.matvec(ad.transpose(control_points, (1, 0)), basis)
    return pts.T @ basis


def smooth_min(values, b: float, axis=None):
    """Soft minimum ``-(1/b) * logsumexp(-b * values)``.

    Lies within ``log(n)/b`` below the true minimum and is differentiable
    everywhere.
    """
    if not b > 0:
        raise ValueError("smooth_min: smoothing parameter b must be > 0")
    return ad.mul(-1.0 / b, ad.logsumexp(ad.mul(-b, values), axis=axis))


def smooth_max(values, b: float, axis=None):
    """Soft maximum ``(1/b) * logsumexp(b * values)`` (within log(n)/b above)."""
    if not b > 0:
        raise ValueError("smooth_max: smoothing parameter b must be > 0")
    return ad.mul(1.0 / b, ad.logsumexp(ad.mul(b, values), axis=axis))
