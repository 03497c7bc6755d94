import numpy as np
import pytest

from faultline import autodiff as ad
from faultline.envs.base import (
    Trajectory,
    bernstein_matrix,
    bezier_eval,
    smooth_max,
    smooth_min,
)


def test_bezier_endpoint_interpolation():
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]])
    assert np.allclose(bezier_eval(pts, 0.0), pts[0])
    assert np.allclose(bezier_eval(pts, 1.0), pts[-1])


def test_bezier_partition_of_unity():
    p = np.array([0.7, -1.2])
    pts = np.tile(p, (5, 1))
    for t in (0.0, 0.3, 0.77, 1.0):
        assert np.allclose(bezier_eval(pts, t), p)


def test_bezier_linear_case():
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert np.allclose(bezier_eval(pts, 0.25), [0.25, 0.0])


def test_bezier_clamps_and_warns():
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.warns(UserWarning):
        out = bezier_eval(pts, 1.5)
    assert np.allclose(out, [1.0, 0.0])


def test_bezier_convex_hull_property(rng):
    pts = rng.standard_normal((5, 2))
    lo = pts.min(axis=0) - 1e-12
    hi = pts.max(axis=0) + 1e-12
    for t in rng.uniform(0, 1, size=50):
        p = bezier_eval(pts, float(t))
        assert np.all(p >= lo) and np.all(p <= hi)


def test_bezier_differentiable_in_control_points():
    t = 0.37

    def f(v):
        return ad.sum(bezier_eval(ad.reshape(v, (3, 2)), t))

    x0 = np.arange(6.0)
    res = ad.value_and_grad(f, x0)
    basis = bernstein_matrix(np.array([t]), 3)[0]
    expected = np.repeat(basis, 2)
    assert np.allclose(res.gradient, expected)


def test_smooth_min_single_value():
    assert np.isclose(float(smooth_min(np.array([3.7]), 100.0)), 3.7)


def test_smooth_min_two_zeros():
    assert np.isclose(float(smooth_min(np.zeros(2), 100.0)), -np.log(2) / 100.0)


def test_smooth_min_dominant_value():
    v = np.array([1.0, 100.0])
    assert abs(float(smooth_min(v, 100.0)) - 1.0) < 1e-12


def test_smooth_min_error_bound_exact(rng):
    b = 25.0
    for n in (2, 5, 17):
        v = rng.standard_normal(n)
        sm = float(smooth_min(v, b))
        assert sm <= v.min() + 1e-12
        assert sm >= v.min() - np.log(n) / b - 1e-12
    # bound tightens as b grows
    v = rng.standard_normal(6)
    for b in (10.0, 100.0, 1000.0):
        assert abs(float(smooth_min(v, b)) - v.min()) <= np.log(6) / b + 1e-12


def test_smooth_max_mirrors_smooth_min(rng):
    v = rng.standard_normal(7)
    assert np.isclose(float(smooth_max(v, 50.0)), -float(smooth_min(-v, 50.0)))


def test_smooth_min_axis_support(rng):
    v = rng.standard_normal((4, 3))
    out = smooth_min(v, 30.0, axis=1)
    expected = [float(smooth_min(v[i], 30.0)) for i in range(4)]
    assert np.allclose(out, expected)


def test_trajectory_invariants():
    Trajectory(np.array([0.0, 0.1, 0.2]), states=None)
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.2, 0.1]), states=None)
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.1, 0.3]), states=None)


def test_default_batched_hooks_loop_simulate(quad_env, rng):
    x = rng.standard_normal(2)
    failures = rng.standard_normal((3, 2))
    out = quad_env.cost_vs_failures(x, failures)
    expected = [float(quad_env.simulate_cost(x, failures[i])) for i in range(3)]
    assert np.allclose(out, expected)
    designs = rng.standard_normal((4, 2))
    matrix = quad_env.cost_matrix(designs, failures)
    assert matrix.shape == (4, 3)
    assert np.isclose(matrix[2, 1], float(quad_env.simulate_cost(designs[2], failures[1])))
