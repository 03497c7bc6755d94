import numpy as np
import pytest

from faultline import autodiff as ad
from faultline.envs import FormationConfig, FormationEnv
from faultline.envs.formation import wind_parameter_count

from conftest import finite_difference_gradient


def small_env(**kw):
    defaults = dict(n_agents=3, horizon=2.0, dt=0.05, wind_hidden=(8, 8))
    defaults.update(kw)
    return FormationEnv(FormationConfig(**defaults))


def gathered_design(env, points):
    pts = np.asarray(points, dtype=float)
    return np.stack([np.tile(p, env.config.control_points) for p in pts]).ravel()


def strong_links_disturbance(env, wind=0.0, strength=40.0):
    y = np.full(env.dim_y, wind)
    y[env.n_wind:] = strength
    return y


# -- configuration -----------------------------------------------------------


def test_dimensions():
    env = FormationEnv(FormationConfig())
    # 5 agents default to 3 control points: dim_x = 2 * 3 * 5
    assert env.dim_x == 30
    assert env.dim_y == wind_parameter_count((32, 32)) + 10
    big = FormationEnv(FormationConfig(n_agents=10))
    assert big.config.control_points == 5
    assert big.dim_x == 100


def test_wind_parameter_count_formula():
    h1, h2 = 4, 7
    assert wind_parameter_count((h1, h2)) == (2 * h1 + h1) + (h1 * h2 + h2) + (2 * h2 + 2)


# -- wind field ---------------------------------------------------------------


def test_zero_parameters_give_zero_force():
    env = small_env()
    force = env.wind_force(np.zeros(env.n_wind), np.array([0.3, -1.2]))
    assert np.allclose(np.asarray(force), 0.0, atol=1e-12)


def test_wind_force_norm_capped(rng):
    env = small_env()
    worst = 0.0
    for _ in range(10_000):
        params = rng.standard_normal(env.n_wind) * 3.0
        pos = rng.standard_normal(2) * 2.0
        f = np.asarray(env.wind_force(params, pos))
        worst = max(worst, float(np.linalg.norm(f)))
    assert worst <= env.config.force_cap + 1e-12


def test_wind_force_gradient_matches_fd(rng):
    env = small_env()
    pos = np.array([0.4, 0.9])
    params = rng.standard_normal(env.n_wind)

    def f(v):
        force = env.wind_force(v, pos)
        return ad.dot(force, np.array([0.3, -1.1]))

    res = ad.value_and_grad(f, params)
    fd = finite_difference_gradient(lambda v: float(f(v)), params)
    assert np.allclose(res.gradient, fd, rtol=1e-5, atol=1e-8)


# -- adjacency and connectivity --------------------------------------------------


def test_adjacency_at_comm_radius_is_half_strength():
    env = small_env(comm_radius=1.0)
    positions = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 10.0]])
    raw = np.full(env.n_pairs, 3.0)
    a = np.asarray(env.adjacency(positions, raw))
    s = 1.0 / (1.0 + np.exp(-env.config.strength_gain * 3.0))
    assert np.isclose(a[0, 1], 0.5 * s)
    assert np.allclose(np.diag(a), 0.0)
    assert np.allclose(a, a.T)


def test_adjacency_saturates_far_and_near():
    env = small_env(n_agents=2, comm_radius=1.0)
    far = np.asarray(env.adjacency(np.array([[0.0, 0.0], [9.0, 0.0]]),
                                   np.array([40.0])))
    assert far[0, 1] < 1e-12
    near = np.asarray(env.adjacency(np.array([[0.0, 0.0], [0.0, 0.0]]),
                                    np.array([40.0])))
    # sigmoid(20 R^2) at d = 0: within 2.1e-9 of 1
    assert abs(near[0, 1] - 1.0) < 2.1e-9


def test_lambda2_known_spectra():
    env5 = small_env(n_agents=5)
    complete = np.ones((5, 5)) - np.eye(5)
    assert np.isclose(float(env5.lambda2(complete)), 5.0, atol=1e-12)

    env2 = small_env(n_agents=2)
    a = 0.7
    two = np.array([[0.0, a], [a, 0.0]])
    assert np.isclose(float(env2.lambda2(two)), 2 * a)

    env4 = small_env(n_agents=4)
    blocks = np.zeros((4, 4))
    blocks[0, 1] = blocks[1, 0] = 1.0
    blocks[2, 3] = blocks[3, 2] = 1.0
    assert abs(float(env4.lambda2(blocks))) < 1e-10


# -- cost ------------------------------------------------------------------------


def test_static_connected_swarm_at_goal_cost():
    env = FormationEnv(FormationConfig())
    goal = np.asarray(env.config.goal)
    x = gathered_design(env, [goal] * env.config.n_agents)
    y = strong_links_disturbance(env)
    n_times = env.steps + 1
    lam2 = env.config.n_agents  # complete graph with unit weights
    expected = 1.0 / (lam2 + env.config.barrier_offset) \
        + np.log(n_times) / env.config.smoothing
    got = float(env.simulate_cost(x, y))
    # weights are within ~2e-9 of 1, so the formula holds tightly
    assert np.isclose(got, expected, atol=1e-3)


def test_com_offset_adds_ten_per_meter():
    env = small_env()
    base = np.array([[0.4, 0.6], [0.8, 0.6], [0.6, 1.0]])
    y = strong_links_disturbance(env)
    c0 = float(env.simulate_cost(gathered_design(env, base), y))
    shift = np.array([0.5, 0.0])  # rigid translation: lambda2 unchanged
    c1 = float(env.simulate_cost(gathered_design(env, base + shift), y))
    goal = np.asarray(env.config.goal)
    d0 = np.linalg.norm(base.mean(axis=0) - goal)
    d1 = np.linalg.norm((base + shift).mean(axis=0) - goal)
    assert np.isclose(c1 - c0, 10.0 * (d1 - d0), atol=1e-9)


def test_severed_links_drive_cost_past_barrier():
    env = small_env()
    x = gathered_design(env, [[0.5, 0.5], [0.6, 0.5], [0.55, 0.6]])
    y = strong_links_disturbance(env, strength=-40.0)  # s_ij ~ 0
    assert float(env.simulate_cost(x, y)) >= 100.0


def test_determinism_same_inputs_same_bits(rng):
    env = small_env()
    x = env.prior_x.sample(rng)
    y = env.prior_y.sample(rng)
    t1 = env.trace(x, y).states["positions"]
    t2 = env.trace(x, y).states["positions"]
    assert np.array_equal(t1, t2)
    assert float(env.simulate_cost(x, y)) == float(env.simulate_cost(x, y))


def test_lambda2_nonnegative_for_prior_strengths(rng):
    env = small_env()
    for _ in range(20):
        x = env.prior_x.sample(rng)
        y = env.prior_y.sample(rng)
        parts, strengths = env._split_wind(y)
        positions = env._positions_one_design(x, [np.asarray(p) for p in parts])
        smat = np.asarray(env._strength_matrix(strengths))[0]
        gate_pos = positions[-1, 0]
        a = np.asarray(env.adjacency(gate_pos, y[env.n_wind:]))
        lap = np.diag(a.sum(axis=1)) - a
        eigs = np.linalg.eigvalsh(lap)
        assert eigs.min() > -1e-10


# -- gradients ----------------------------------------------------------------------


def test_full_gradient_matches_fd_small(rng):
    env = small_env()
    for _ in range(3):
        x = env.prior_x.sample(rng)
        y = env.prior_y.sample(rng)
        joint = np.concatenate([x, y])

        def f(v):
            return env.simulate_cost(v[:env.dim_x], v[env.dim_x:])

        if float(f(joint)) > 99.0:
            continue  # barrier saturated: gradients vanish by design
        res = ad.value_and_grad(f, joint)
        fd = finite_difference_gradient(lambda v: float(f(v)), joint, h=1e-6)
        denom = max(np.abs(fd).max(), 1e-9)
        assert np.abs(res.gradient - fd).max() / denom < 1e-4


def test_batched_hooks_agree(rng):
    env = small_env()
    X = np.stack([env.prior_x.sample(rng) for _ in range(3)])
    Y = np.stack([env.prior_y.sample(rng) for _ in range(2)])
    single = np.array([[float(env.simulate_cost(X[i], Y[j])) for j in range(2)]
                       for i in range(3)])
    assert np.allclose(env.cost_matrix(X, Y), single, rtol=1e-10)
    assert np.allclose(np.asarray(env.cost_vs_failures(X[1], Y)), single[1], rtol=1e-10)
    assert np.allclose(np.asarray(env.cost_vs_designs(X, Y[0])), single[:, 0], rtol=1e-10)


def test_batched_design_gradient_matches_single(rng):
    env = small_env()
    X = np.stack([env.prior_x.sample(rng) for _ in range(2)])
    y = env.prior_y.sample(rng)

    def batched(v):
        return ad.sum(env.cost_vs_designs(X, v))

    res = ad.value_and_grad(batched, y)
    pair = np.zeros_like(y)
    for i in range(2):
        pair += ad.value_and_grad(lambda v: env.simulate_cost(X[i], v), y).gradient
    assert np.allclose(res.gradient, pair, rtol=1e-7, atol=1e-9)
