"""Prior distributions with differentiable log-densities and samplers.

Log-densities are written against :mod:`faultline.autodiff` ops, so they
accept either plain arrays (fast numpy evaluation) or graph nodes
(differentiable evaluation).  Distributions are immutable after
construction; RNG streams are always caller-owned.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .validation import check_vector

_LOG_2PI = float(np.log(2.0 * np.pi))


class DiagonalGaussian:
    """Independent Gaussian per coordinate; normalized log-density."""

    def __init__(self, mean, stddev):
        self.mean = check_vector(mean, name="mean")
        self.stddev = check_vector(stddev, dim=self.mean.shape[0], name="stddev")
        if not np.all(self.stddev > 0):
            raise ValueError("stddev: entries must be strictly positive")
        self._log_norm = float(
            -0.5 * self.mean.shape[0] * _LOG_2PI - np.log(self.stddev).sum()
        )

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_density(self, v):
        self._check_dim(v)
        z = ad.div(ad.sub(v, self.mean), self.stddev)
        return ad.add(ad.mul(-0.5, ad.sum(ad.mul(z, z))), self._log_norm)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.stddev * rng.standard_normal(self.dim)

    def _check_dim(self, v):
        n = np.shape(v.value if isinstance(v, ad.Node) else v)
        if n != (self.dim,):
            raise ValueError(f"log_density: expected shape ({self.dim},), got {n}")

    def __repr__(self):
        return f"DiagonalGaussian(dim={self.dim})"


class SmoothedUniformBox:
    """Uniform box with quadratic log-density tails.

    The log-density is 0 (unnormalized) inside ``[lower, upper]`` and
    ``-tail_strength * dist(v, box)**2`` outside, which makes it
    continuously differentiable and strongly log-concave in the tails.
    Sampling draws from the interior uniform and ignores the tails.
    """

    def __init__(self, lower, upper, tail_strength: float = 100.0):
        self.lower = check_vector(lower, name="lower")
        self.upper = check_vector(upper, dim=self.lower.shape[0], name="upper")
        if not np.all(self.lower < self.upper):
            raise ValueError("box bounds: require lower < upper elementwise")
        if not tail_strength > 0:
            raise ValueError("tail_strength: must be > 0")
        self.tail_strength = float(tail_strength)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def log_density(self, v):
        self._check_dim(v)
        below = ad.hinge(ad.sub(self.lower, v))
        above = ad.hinge(ad.sub(v, self.upper))
        dist_sq = ad.add(ad.sum(ad.mul(below, below)), ad.sum(ad.mul(above, above)))
        return ad.mul(-self.tail_strength, dist_sq)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def _check_dim(self, v):
        n = np.shape(v.value if isinstance(v, ad.Node) else v)
        if n != (self.dim,):
            raise ValueError(f"log_density: expected shape ({self.dim},), got {n}")

    def __repr__(self):
        return f"SmoothedUniformBox(dim={self.dim}, tail_strength={self.tail_strength})"


def log_density_and_grad(dist, v) -> ad.GradientResult:
    """Value and gradient of a distribution's log-density at ``v``."""
    return ad.value_and_grad(dist.log_density, v)
