"""Drone-swarm formation environment.

Double-integrator agents track Bezier paths under PD control while an
adversarial wind field (a small force-capped tanh network, exogenous)
pushes them around.  The communication graph weights pairs of agents by
``s_ij * sigmoid(20 * (R^2 - d_ij^2))`` where ``s_ij`` is an exogenous
connection strength squashed into (0, 1); the cost combines distance of
the final center of mass from the goal with a softened worst-case (over
time) barrier on the Laplacian's second eigenvalue, which collapses to
zero exactly when the communication graph disconnects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..distributions import DiagonalGaussian, SmoothedUniformBox
from .base import Environment, Trajectory, bernstein_matrix, smooth_max
from .rollouts import control_points_to_refs, first_control_point, pd_wind_rollout

_COM_GUARD = 1e-18
_NORM_GUARD = 1e-9
# 1/(lam2 + 1e-2) never exceeds 100; capping the barrier just below that
# zeroes the eigenvalue cotangent on the saturated plateau, where the
# near-null Laplacian spectrum is numerically degenerate anyway
_BARRIER_CAP = 100.0 - 1e-4


@dataclass
class FormationConfig:
    n_agents: int = 5
    control_points: int | None = None   # default: 3 for n<=5 else 5
    comm_radius: float = 1.8            # m
    horizon: float = 30.0               # s
    dt: float = 0.05                    # s
    gain_p: float = 4.0
    gain_d: float = 4.0
    mass: float = 1.0                   # kg
    wind_hidden: tuple = (32, 32)
    force_cap: float = 0.5              # N
    goal: tuple = (1.8, 1.0)            # m
    box_lower: tuple = (0.0, 0.0)       # m, control-point prior box
    box_upper: tuple = (2.0, 2.0)
    smoothing: float = 100.0
    barrier_offset: float = 1e-2
    # slope of the sigmoid squashing raw strengths into (0, 1)
    strength_gain: float = 1.0

    def __post_init__(self):
        if self.control_points is None:
            self.control_points = 3 if self.n_agents <= 5 else 5
        if self.n_agents < 2 or self.control_points < 2:
            raise ValueError("FormationConfig: need >=2 agents and >=2 control points")
        if len(self.wind_hidden) != 2 or min(self.wind_hidden) < 1:
            raise ValueError("FormationConfig: wind_hidden must name two positive widths")


def wind_parameter_count(hidden: tuple) -> int:
    h1, h2 = hidden
    return (2 * h1 + h1) + (h1 * h2 + h2) + (h2 * 2 + 2)


class FormationEnv(Environment):
    def __init__(self, config: FormationConfig | None = None):
        self.config = config or FormationConfig()
        c = self.config
        self.steps = int(round(c.horizon / c.dt))
        self.n_pairs = c.n_agents * (c.n_agents - 1) // 2
        self.n_wind = wind_parameter_count(c.wind_hidden)
        self.dim_x = 2 * c.control_points * c.n_agents
        self.dim_y = self.n_wind + self.n_pairs
        box_lo = np.asarray(c.box_lower, dtype=float)
        box_hi = np.asarray(c.box_upper, dtype=float)
        self.prior_x = SmoothedUniformBox(
            np.tile(box_lo, c.control_points * c.n_agents),
            np.tile(box_hi, c.control_points * c.n_agents))
        self.prior_y = DiagonalGaussian(np.zeros(self.dim_y), np.ones(self.dim_y))
        t_norm = np.arange(self.steps) * c.dt / c.horizon
        self._bern = bernstein_matrix(t_norm, c.control_points)
        self.times = np.arange(self.steps + 1) * c.dt
        # maps the strengths vector onto a symmetric zero-diagonal matrix
        n = c.n_agents
        embed = np.zeros((n * n, self.n_pairs))
        k = 0
        for i in range(n):
            for j in range(i + 1, n):
                embed[i * n + j, k] = 1.0
                embed[j * n + i, k] = 1.0
                k += 1
        self._pair_embed = embed
        self._eye = np.eye(n)

    # -- wind field -----------------------------------------------------------

    def _wind_slices(self):
        h1, h2 = self.config.wind_hidden
        sizes = [2 * h1, h1, h1 * h2, h2, 2 * h2, 2]
        shapes = [(h1, 2), (h1,), (h2, h1), (h2,), (2, h2), (2,)]
        offsets = np.cumsum([0] + sizes)
        return [(int(offsets[i]), int(offsets[i + 1]), shapes[i]) for i in range(6)]

    def _split_wind(self, y=None, batched_rows=None):
        """Wind-net parts with a leading batch axis, plus raw strengths.

        Either a single disturbance vector ``y`` (node or raw; batch 1) or a
        raw (B, dim_y) matrix via ``batched_rows``.
        """
        if batched_rows is not None:
            rows = np.asarray(batched_rows, dtype=float)
            parts = [rows[:, a:b].reshape((rows.shape[0],) + shape)
                     for a, b, shape in self._wind_slices()]
            return parts, rows[:, self.n_wind:]
        parts = [ad.reshape(y[a:b], (1,) + shape) for a, b, shape in self._wind_slices()]
        return parts, y[self.n_wind:]

    def wind_force(self, params, position):
        """Wind force (N) at one 2-D position; ``||force|| <= force_cap``.

        ``params`` is the wind-parameter block of the disturbance vector
        (length ``n_wind``), node or raw.
        """
        mats = [ad.reshape(params[a:b], shape) for a, b, shape in self._wind_slices()]
        w1, b1, w2, b2, w3, b3 = mats
        z1 = ad.tanh(ad.add(ad.matvec(w1, position), b1))
        z2 = ad.tanh(ad.add(ad.matvec(w2, z1), b2))
        u = ad.add(ad.matvec(w3, z2), b3)
        nrm = ad.sqrt(ad.add(ad.sum(ad.mul(u, u)), _NORM_GUARD ** 2))
        scale = ad.div(ad.mul(self.config.force_cap, ad.tanh(nrm)), nrm)
        return ad.mul(scale, u)

    # -- simulation -------------------------------------------------------------

    def _positions_one_design(self, x, wind_parts):
        c = self.config
        refs = control_points_to_refs(x, c.n_agents, c.control_points, self._bern)
        refs = ad.reshape(refs, (self.steps, 1, c.n_agents, 2))
        p0 = ad.reshape(first_control_point(x, c.n_agents, c.control_points),
                        (1, c.n_agents, 2))
        return pd_wind_rollout(refs, p0, wind_parts, c.dt, c.gain_p, c.gain_d,
                               c.mass, c.force_cap)

    def _positions_many_designs(self, designs, wind_parts):
        """(B, dim_x) raw design rows, shared wind parts -> (T+1, B, n, 2)."""
        c = self.config
        rows = np.asarray(designs, dtype=float)
        b = rows.shape[0]
        flat = rows.reshape(b * c.n_agents * c.control_points * 2)
        refs = control_points_to_refs(flat, b * c.n_agents, c.control_points, self._bern)
        refs = refs.reshape(self.steps, b, c.n_agents, 2)
        p0 = first_control_point(flat, b * c.n_agents, c.control_points) \
            .reshape(b, c.n_agents, 2)
        return pd_wind_rollout(refs, p0, wind_parts, c.dt, c.gain_p, c.gain_d,
                               c.mass, c.force_cap)

    def _strength_matrix(self, strengths):
        """(pairs,) node/raw or (B, pairs) raw -> (B, n, n), zero diagonal."""
        n = self.config.n_agents
        squashed = ad.sigmoid(ad.mul(self.config.strength_gain, strengths))
        v = squashed.value if isinstance(squashed, ad.Node) else squashed
        if np.ndim(v) == 1:
            flat = ad.matvec(self._pair_embed, squashed)
            return ad.reshape(flat, (1, n, n))
        flat = ad.matmul(squashed, self._pair_embed.T)
        return ad.reshape(flat, (v.shape[0], n, n))

    def lambda2(self, adjacency):
        """Second-smallest Laplacian eigenvalue of one adjacency matrix."""
        n = self.config.n_agents
        deg = ad.sum(adjacency, axis=1)
        lap = ad.sub(ad.mul(ad.reshape(deg, (n, 1)), self._eye), adjacency)
        eigs = ad.sym_eigenvalues(ad.reshape(lap, (1, n, n)))
        return eigs[0, 1]

    def adjacency(self, positions, strengths):
        """Communication adjacency for one configuration (n, 2) + (pairs,)."""
        n = self.config.n_agents
        left = ad.reshape(positions, (n, 1, 2))
        right = ad.reshape(positions, (1, n, 2))
        diff = ad.sub(left, right)
        d2 = ad.sum(ad.mul(diff, diff), axis=2)
        gate = ad.sigmoid(ad.mul(20.0, ad.sub(self.config.comm_radius ** 2, d2)))
        smat = ad.reshape(self._strength_matrix(strengths), (n, n))
        return ad.mul(smat, gate)

    def _cost_from_positions(self, positions, strength_mat):
        """(T+1, B, n, 2) positions + (Bs, n, n) strengths -> (B,) costs."""
        c = self.config
        n = c.n_agents
        t1 = self.steps + 1
        b = np.shape(positions.value if isinstance(positions, ad.Node) else positions)[1]
        bs = np.shape(strength_mat.value if isinstance(strength_mat, ad.Node) else strength_mat)[0]

        left = ad.reshape(positions, (t1, b, n, 1, 2))
        right = ad.reshape(positions, (t1, b, 1, n, 2))
        diff = ad.sub(left, right)
        d2 = ad.sum(ad.mul(diff, diff), axis=4)                       # (T+1, B, n, n)
        gate = ad.sigmoid(ad.mul(20.0, ad.sub(c.comm_radius ** 2, d2)))
        adj = ad.mul(ad.reshape(strength_mat, (1, bs, n, n)), gate)
        deg = ad.sum(adj, axis=3)
        lap = ad.sub(ad.mul(ad.reshape(deg, (t1, b, n, 1)), self._eye), adj)
        eigs = ad.sym_eigenvalues(lap)
        lam2 = eigs[..., 1]                                           # (T+1, B)
        barrier = ad.minimum(ad.div(1.0, ad.add(lam2, c.barrier_offset)), _BARRIER_CAP)
        worst = smooth_max(barrier, c.smoothing, axis=0)              # (B,)

        final = positions[t1 - 1]                                     # (B, n, 2)
        com = ad.mul(1.0 / n, ad.sum(final, axis=1))                  # (B, 2)
        off = ad.sub(com, np.asarray(c.goal, dtype=float))
        com_dist = ad.sqrt(ad.add(ad.sum(ad.mul(off, off), axis=1), _COM_GUARD))
        return ad.add(ad.mul(10.0, com_dist), worst)

    # -- environment contract -----------------------------------------------------

    def simulate_cost(self, x, y):
        parts, strengths = self._split_wind(y)
        positions = self._positions_one_design(x, parts)
        costs = self._cost_from_positions(positions, self._strength_matrix(strengths))
        return costs[0]

    def cost_vs_failures(self, x, failures):
        parts, strengths = self._split_wind(batched_rows=failures)
        positions = self._positions_one_design(x, parts)
        return self._cost_from_positions(positions, self._strength_matrix(strengths))

    def cost_vs_designs(self, designs, y):
        parts, strengths = self._split_wind(y)
        positions = self._positions_many_designs(designs, parts)
        return self._cost_from_positions(positions, self._strength_matrix(strengths))

    def cost_matrix(self, designs, failures):
        designs = np.asarray(designs, dtype=float)
        failures = np.asarray(failures, dtype=float)
        rows = []
        for j in range(designs.shape[0]):
            out = self.cost_vs_failures(designs[j], failures)
            rows.append(out.value if isinstance(out, ad.Node) else out)
        return np.stack(rows)

    def trace(self, x, y) -> Trajectory:
        x = self.validate_design(x)
        y = self.validate_disturbance(y)
        parts, _ = self._split_wind(y)
        positions = self._positions_one_design(x, parts)
        pos = positions.value if isinstance(positions, ad.Node) else positions
        return Trajectory(self.times, {"positions": pos[:, 0]})
