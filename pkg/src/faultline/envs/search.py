"""Multi-robot search-evasion environment.

Seeker robots (design) and hider robots (exogenous) each track Bezier
reference trajectories with saturated proportional control inside a
rectangular arena.  The cost sums, over hiders, the softened minimum over
time of the softened minimum over seekers of the seeker-hider distance
minus the sensing radius: positive cost means a hider stayed out of every
seeker's sensing range for the whole run.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..distributions import SmoothedUniformBox
from .base import Environment, Trajectory, bernstein_matrix, smooth_min
from .rollouts import control_points_to_refs, first_control_point, tracking_rollout

_DIST_GUARD = 1e-18


class _Workspace:
    """Per-thread reusable buffers (allocation is the hot cost here).

    Pickles to an empty workspace so passing environments to worker
    processes stays cheap.
    """

    def __init__(self):
        self._local = threading.local()

    def __reduce__(self):
        return (_Workspace, ())

    def get(self, key, shape):
        store = getattr(self._local, "store", None)
        if store is None:
            store = self._local.store = {}
        buf = store.get(key)
        if buf is None or buf.shape != shape:
            buf = np.empty(shape)
            store[key] = buf
        return buf


@dataclass
class SearchConfig:
    n_seekers: int = 6
    n_hiders: int = 10
    control_points: int = 5
    arena: tuple = (3.2, 2.0)       # m
    sensing_radius: float = 0.25    # m
    smoothing: float = 100.0
    horizon: float = 100.0          # s
    dt: float = 0.1                 # s
    max_speed: float = 0.2          # m/s
    gain: float = 1.0               # 1/s

    def __post_init__(self):
        if min(self.n_seekers, self.n_hiders) < 1 or self.control_points < 2:
            raise ValueError("SearchConfig: need >=1 agent per side and >=2 control points")
        if self.sensing_radius <= 0 or self.dt <= 0 or self.horizon <= self.dt:
            raise ValueError("SearchConfig: radius/dt/horizon must be positive")


class SearchEnv(Environment):
    """See module docstring; priors are smoothed-uniform boxes over the arena."""

    def __init__(self, config: SearchConfig | None = None):
        self.config = config or SearchConfig()
        c = self.config
        self.steps = int(round(c.horizon / c.dt))
        self.dim_x = 2 * c.control_points * c.n_seekers
        self.dim_y = 2 * c.control_points * c.n_hiders
        arena = np.asarray(c.arena, dtype=float)
        self.prior_x = SmoothedUniformBox(
            np.zeros(self.dim_x), np.tile(arena, c.control_points * c.n_seekers))
        self.prior_y = SmoothedUniformBox(
            np.zeros(self.dim_y), np.tile(arena, c.control_points * c.n_hiders))
        # references are evaluated at the step start times t_0 .. t_{T-1},
        # mapped affinely onto the Bezier parameter range [0, 1]
        t_norm = np.arange(self.steps) * c.dt / c.horizon
        self._bern = bernstein_matrix(t_norm, c.control_points)
        self.times = np.arange(self.steps + 1) * c.dt
        self._workspace = _Workspace()

    # -- simulation --------------------------------------------------------

    def _rollout(self, flat, n_agents):
        c = self.config
        refs = control_points_to_refs(flat, n_agents, c.control_points, self._bern)
        p0 = first_control_point(flat, n_agents, c.control_points)
        return tracking_rollout(refs, p0, c.dt, c.gain, c.max_speed)

    def _rollout_batch_raw(self, rows: np.ndarray, n_agents: int) -> np.ndarray:
        """(B, dim) -> (B, T+1, n_agents, 2), plain numpy."""
        rows = np.asarray(rows, dtype=float)
        b = rows.shape[0]
        flat = rows.reshape(b * n_agents * self.config.control_points * 2)
        pos = self._rollout(flat, b * n_agents)
        return pos.reshape(self.steps + 1, b, n_agents, 2).swapaxes(0, 1)

    def _cost_from_positions(self, seek_pos, hide_pos):
        """Scenario costs from (T+1, Bs, ns, 2) and (T+1, Bh, nh, 2) positions.

        Fused primitive: softened min over seekers, then over time, summed
        over hiders, with the softmax weights cached for the backward pass.
        (`_cost_from_positions_reference` is the elementary-ops equivalent.)
        """
        c = self.config
        b_soft = c.smoothing
        is_node = isinstance(seek_pos, ad.Node) or isinstance(hide_pos, ad.Node)
        sp = np.asarray(seek_pos.value if isinstance(seek_pos, ad.Node) else seek_pos, float)
        hp = np.asarray(hide_pos.value if isinstance(hide_pos, ad.Node) else hide_pos, float)
        sp = sp if sp.flags.c_contiguous else np.ascontiguousarray(sp)
        hp = hp if hp.flags.c_contiguous else np.ascontiguousarray(hp)

        # layout (ns, T+1, B, nh): reductions run over leading axes, which
        # numpy handles an order of magnitude faster than tiny trailing axes;
        # all large intermediates live in reused per-thread buffers, so the
        # backward pass must run before the next forward on this thread
        # (value_and_grad evaluates exactly that way)
        t1 = sp.shape[0]
        ns = sp.shape[2]
        bh, nh = hp.shape[1], hp.shape[2]
        b = max(sp.shape[1], bh)
        ws = self._workspace
        shape = (ns, t1, b, nh)
        sx = np.ascontiguousarray(np.moveaxis(sp[..., 0], 2, 0))[:, :, :, None]
        sy = np.ascontiguousarray(np.moveaxis(sp[..., 1], 2, 0))[:, :, :, None]
        hx = np.ascontiguousarray(hp[..., 0])[None]
        hy = np.ascontiguousarray(hp[..., 1])[None]
        dx = np.subtract(hx, sx, out=ws.get("dx", shape))
        dy = np.subtract(hy, sy, out=ws.get("dy", shape))
        dist = ws.get("dist", shape)
        np.multiply(dx, dx, out=dist)
        tmp = ws.get("tmp", shape)
        np.multiply(dy, dy, out=tmp)
        dist += tmp
        dist += _DIST_GUARD
        np.sqrt(dist, out=dist)

        e1 = ws.get("e1", shape)
        np.multiply(dist, -b_soft, out=e1)
        m1 = e1.max(axis=0)
        e1 -= m1[None]
        np.exp(e1, out=e1)
        s1 = e1.sum(axis=0)
        closest = -(m1 + np.log(s1)) / b_soft                     # (T+1, B, nh)

        neg2 = -b_soft * (closest - c.sensing_radius)
        m2 = neg2.max(axis=0)
        e2 = np.exp(neg2 - m2[None])
        s2 = e2.sum(axis=0)
        worst = -(m2 + np.log(s2)) / b_soft                       # (B, nh)
        costs = worst.sum(axis=1)                                 # (B,)
        if not is_node:
            return costs

        def vjp(g):
            g_adj = (np.asarray(g)[None, :, None] / s2[None]) * e2   # (T+1, B, nh)
            # g_d2 = g_adj * e1 / (s1 * 2 * dist), assembled in place
            g_d2 = np.multiply(e1, g_adj[None] / (2.0 * s1[None]), out=tmp)
            g_d2 /= dist
            np.multiply(g_d2, dx, out=dx)   # dx becomes gx
            np.multiply(g_d2, dy, out=dy)   # dy becomes gy
            g_hide = np.stack([2.0 * dx.sum(axis=0), 2.0 * dy.sum(axis=0)], axis=-1)
            g_seek = np.stack([-2.0 * dx.sum(axis=3), -2.0 * dy.sum(axis=3)], axis=-1)
            g_seek = np.moveaxis(g_seek, 0, 2)                       # (T+1, B, ns, 2)
            if sp.shape[1] == 1 and g_seek.shape[1] != 1:
                g_seek = g_seek.sum(axis=1, keepdims=True)
            if hp.shape[1] == 1 and g_hide.shape[1] != 1:
                g_hide = g_hide.sum(axis=1, keepdims=True)
            return g_seek, g_hide

        return ad.Node(costs, (seek_pos, hide_pos), vjp)

    def _cost_from_positions_reference(self, seek_pos, hide_pos):
        """Elementary-ops version of `_cost_from_positions` (test oracle)."""
        c = self.config
        t1 = self.steps + 1
        ns, nh = c.n_seekers, c.n_hiders
        bs = np.shape(seek_pos.value if isinstance(seek_pos, ad.Node) else seek_pos)[1]
        bh = np.shape(hide_pos.value if isinstance(hide_pos, ad.Node) else hide_pos)[1]
        seek = ad.reshape(seek_pos, (t1, bs, 1, ns, 2))
        hide = ad.reshape(hide_pos, (t1, bh, nh, 1, 2))
        diff = ad.sub(hide, seek)
        dist = ad.sqrt(ad.add(ad.sum(ad.mul(diff, diff), axis=4), _DIST_GUARD))
        closest = smooth_min(dist, c.smoothing, axis=3)          # (T+1, B, nh)
        escape = ad.sub(closest, c.sensing_radius)
        worst_time = smooth_min(escape, c.smoothing, axis=0)     # (B, nh)
        return ad.sum(worst_time, axis=1)                        # (B,)

    # -- environment contract ----------------------------------------------

    def simulate_cost(self, x, y):
        seek = self._rollout(x, self.config.n_seekers)
        hide = self._rollout(y, self.config.n_hiders)
        t1 = self.steps + 1
        costs = self._cost_from_positions(
            ad.reshape(seek, (t1, 1, self.config.n_seekers, 2)),
            ad.reshape(hide, (t1, 1, self.config.n_hiders, 2)))
        return costs[0]

    def cost_vs_failures(self, x, failures):
        failures = np.asarray(failures, dtype=float)
        seek = self._rollout(x, self.config.n_seekers)
        t1 = self.steps + 1
        seek = ad.reshape(seek, (t1, 1, self.config.n_seekers, 2))
        hide = self._rollout_batch_raw(failures, self.config.n_hiders).swapaxes(0, 1)
        return self._cost_from_positions(seek, hide)

    def cost_vs_designs(self, designs, y):
        designs = np.asarray(designs, dtype=float)
        hide = self._rollout(y, self.config.n_hiders)
        t1 = self.steps + 1
        hide = ad.reshape(hide, (t1, 1, self.config.n_hiders, 2))
        seek = self._rollout_batch_raw(designs, self.config.n_seekers).swapaxes(0, 1)
        return self._cost_from_positions(seek, hide)

    def make_repair_cost(self, failures):
        hide = np.ascontiguousarray(
            self._rollout_batch_raw(np.asarray(failures, dtype=float),
                                    self.config.n_hiders).swapaxes(0, 1))
        t1 = self.steps + 1
        ns = self.config.n_seekers

        def cost_fn(x):
            seek = ad.reshape(self._rollout(x, ns), (t1, 1, ns, 2))
            return self._cost_from_positions(seek, hide)

        return cost_fn

    def make_failure_cost(self, designs):
        seek = np.ascontiguousarray(
            self._rollout_batch_raw(np.asarray(designs, dtype=float),
                                    self.config.n_seekers).swapaxes(0, 1))
        t1 = self.steps + 1
        nh = self.config.n_hiders

        def cost_fn(y):
            hide = ad.reshape(self._rollout(y, nh), (t1, 1, nh, 2))
            return self._cost_from_positions(seek, hide)

        return cost_fn

    def cost_matrix(self, designs, failures):
        designs = np.asarray(designs, dtype=float)
        failures = np.asarray(failures, dtype=float)
        seek = self._rollout_batch_raw(designs, self.config.n_seekers)
        hide = self._rollout_batch_raw(failures, self.config.n_hiders)
        rows = []
        for j in range(designs.shape[0]):
            rows.append(self._cost_from_positions(
                seek[j][:, None], hide.swapaxes(0, 1)))
        return np.stack(rows)

    def trace(self, x, y) -> Trajectory:
        x = self.validate_design(x)
        y = self.validate_disturbance(y)
        seek = self._rollout_batch_raw(x[None], self.config.n_seekers)[0]
        hide = self._rollout_batch_raw(y[None], self.config.n_hiders)[0]
        return Trajectory(self.times, {"seekers": seek, "hiders": hide})
