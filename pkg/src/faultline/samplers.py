"""MCMC kernels (MALA, RMH) and the gradient-ascent quench step.

Each kernel advances a single chain against a supplied log-density target.
All acceptance arithmetic happens in log-space; a target evaluation that
fails or returns a non-finite value is treated as log-density ``-inf`` and
the proposal is rejected, so chains survive simulator blow-ups.

The proposal noise is ``N(0, 2*tau*I)`` and the drift is ``tau * grad``;
``tau`` may be a positive scalar or a per-coordinate positive vector
(disjoint coordinate blocks may then use distinct stepsizes).

Targets are objects exposing ``log_density(v) -> float`` and, for the
gradient-based kernels, ``value_and_grad(v) -> (float, ndarray)``.  Use
:class:`TargetDensity` to build one from a single autodiff-composed
callable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .validation import check_stepsize, check_vector

KERNELS = ("mala", "rmh", "gd")


class TargetDensity:
    """Log-density target built from one autodiff-composed callable."""

    def __init__(self, fn):
        self._fn = fn

    def log_density(self, v) -> float:
        out = self._fn(np.asarray(v, dtype=float))
        return float(out.value if isinstance(out, ad.Node) else out)

    def value_and_grad(self, v):
        res = ad.value_and_grad(self._fn, v)
        return res.value, res.gradient


@dataclass
class ChainState:
    """Position plus cached target value (never stale) and acceptance stats."""

    position: np.ndarray
    log_density: float
    grad_log_density: np.ndarray | None = None
    accept_count: int = 0
    steps: int = 0

    @property
    def accept_fraction(self) -> float:
        return self.accept_count / self.steps if self.steps else 0.0


@dataclass
class KernelConfig:
    """Kernel choice, stepsize (scalar or per-coordinate), and substep count."""

    stepsize: float | np.ndarray
    substeps: int
    kernel: str = "mala"

    def __post_init__(self):
        self.stepsize = check_stepsize(self.stepsize, name="stepsize")
        if int(self.substeps) < 1:
            raise ValueError(f"substeps: must be >= 1, got {self.substeps}")
        self.substeps = int(self.substeps)
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel: expected one of {KERNELS}, got {self.kernel!r}")


def _eval_target(target, v, need_grad):
    """Evaluate a target, mapping any failure to (-inf, None)."""
    try:
        if need_grad:
            value, grad = target.value_and_grad(v)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                return -math.inf, None
            return value, grad
        value = target.log_density(v)
        return (value, None) if math.isfinite(value) else (-math.inf, None)
    except ad.AutodiffError:
        return -math.inf, None


def init_chain(target, position, need_grad=True) -> ChainState:
    """Fresh chain state with the target evaluated (and cached) at ``position``."""
    position = check_vector(position, name="position")
    logp, grad = _eval_target(target, position, need_grad)
    return ChainState(position=position, log_density=logp, grad_log_density=grad)


def _drift_residual_sq(diff, tau):
    """sum(diff^2 / (4*tau)) with scalar or per-coordinate tau."""
    return float(np.sum(diff * diff / (4.0 * tau)))


def mala_log_accept(x, logp_x, grad_x, prop, logp_prop, grad_prop, tau) -> float:
    """Log Metropolis ratio for the Langevin proposal (exact Alg.-form)."""
    fwd = _drift_residual_sq(prop - x - tau * grad_x, tau)
    rev = _drift_residual_sq(x - prop - tau * grad_prop, tau)
    return (logp_prop - rev) - (logp_x - fwd)


def mala_step(state: ChainState, target, tau, rng: np.random.Generator) -> ChainState:
    """One Metropolis-adjusted Langevin step."""
    if state.grad_log_density is None:
        raise ValueError("mala_step: chain state carries no gradient (init with need_grad=True)")
    x = state.position
    noise = rng.standard_normal(x.shape[0]) * np.sqrt(2.0 * tau)
    prop = x + tau * state.grad_log_density + noise
    log_u = math.log(rng.random())
    logp_prop, grad_prop = _eval_target(target, prop, need_grad=True)
    if logp_prop == -math.inf:
        return replace(state, steps=state.steps + 1)
    log_ratio = mala_log_accept(
        x, state.log_density, state.grad_log_density, prop, logp_prop, grad_prop, tau
    )
    if log_u < log_ratio:
        return ChainState(prop, logp_prop, grad_prop,
                          state.accept_count + 1, state.steps + 1)
    return replace(state, steps=state.steps + 1)


def rmh_step(state: ChainState, target, tau, rng: np.random.Generator) -> ChainState:
    """One random-walk Metropolis-Hastings step.

    The Gaussian proposal is symmetric, so the stated acceptance ratio
    reduces to the plain density ratio (equivalence covered by tests).
    """
    x = state.position
    noise = rng.standard_normal(x.shape[0]) * np.sqrt(2.0 * tau)
    prop = x + noise
    log_u = math.log(rng.random())
    logp_prop, _ = _eval_target(target, prop, need_grad=False)
    if logp_prop == -math.inf:
        return replace(state, steps=state.steps + 1)
    if log_u < logp_prop - state.log_density:
        return ChainState(prop, logp_prop, None,
                          state.accept_count + 1, state.steps + 1)
    return replace(state, steps=state.steps + 1)


def gd_step(state: ChainState, target, tau) -> ChainState:
    """One deterministic gradient-ascent step on the log-density (quench)."""
    if state.grad_log_density is None:
        raise ValueError("gd_step: chain state carries no gradient (init with need_grad=True)")
    prop = state.position + tau * state.grad_log_density
    logp_prop, grad_prop = _eval_target(target, prop, need_grad=True)
    if logp_prop == -math.inf:
        # divergent step off-manifold: hold position rather than crash
        return replace(state, steps=state.steps + 1)
    return ChainState(prop, logp_prop, grad_prop,
                      state.accept_count + 1, state.steps + 1)


def run_chain(state: ChainState, target, config: KernelConfig,
              rng: np.random.Generator) -> ChainState:
    """Advance one chain ``config.substeps`` times with the configured kernel."""
    if not isinstance(config, KernelConfig):
        raise TypeError("run_chain: config must be a KernelConfig")
    tau = config.stepsize
    for _ in range(config.substeps):
        if config.kernel == "mala":
            state = mala_step(state, target, tau, rng)
        elif config.kernel == "rmh":
            state = rmh_step(state, target, tau, rng)
        else:
            state = gd_step(state, target, tau)
    return state
