import numpy as np
import pytest

from faultline import autodiff as ad
from faultline.distributions import DiagonalGaussian
from faultline.envs.base import Environment


class QuadraticEnv(Environment):
    """J(x, y) = ||x - y||^2 with standard-normal priors."""

    def __init__(self, dim=2):
        self.dim_x = self.dim_y = dim
        self.prior_x = DiagonalGaussian(np.zeros(dim), np.ones(dim))
        self.prior_y = DiagonalGaussian(np.zeros(dim), np.ones(dim))

    def simulate_cost(self, x, y):
        d = ad.sub(x, y)
        return ad.sum(ad.mul(d, d))

    def cost_matrix(self, designs, failures):
        designs = np.asarray(designs, dtype=float)
        failures = np.asarray(failures, dtype=float)
        diff = designs[:, None, :] - failures[None, :, :]
        return (diff * diff).sum(axis=2)


class ConstantEnv(Environment):
    """J independent of everything; for plumbing tests."""

    def __init__(self, value=0.0, dim=2):
        self.value = value
        self.dim_x = self.dim_y = dim
        self.prior_x = DiagonalGaussian(np.zeros(dim), np.ones(dim))
        self.prior_y = DiagonalGaussian(np.zeros(dim), np.ones(dim))

    def simulate_cost(self, x, y):
        return ad.add(ad.mul(0.0, ad.sum(x)), self.value + ad.sum(ad.mul(0.0, y)))


class BimodalFailureEnv(Environment):
    """1-D failure landscape with two wells at y = -2 and y = +2."""

    def __init__(self):
        self.dim_x = 1
        self.dim_y = 1
        self.prior_x = DiagonalGaussian(np.zeros(1), np.ones(1))
        self.prior_y = DiagonalGaussian(np.zeros(1), 2.0 * np.ones(1))

    def simulate_cost(self, x, y):
        left = ad.sub(y[0], -2.0)
        right = ad.sub(y[0], 2.0)
        well = ad.minimum(ad.mul(left, left), ad.mul(right, right))
        return ad.add(ad.mul(0.0, ad.sum(x)), ad.sub(4.0, well))


@pytest.fixture
def quad_env():
    return QuadraticEnv()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference_gradient(f, x, h=1e-6):
    """Dense central-difference gradient (test oracle)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (float(f(xp)) - float(f(xm))) / (2.0 * h)
    return g
