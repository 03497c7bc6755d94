"""Fused trajectory rollouts with hand-coded reverse passes.

The time-stepping loops dominate runtime, so each rollout is a single
graph node whose vjp replays the loop backwards in vectorized numpy
instead of taping thousands of elementary nodes.  Shapes carry an
explicit scenario batch axis ``B`` so one evaluation can simulate a whole
population of disturbances (or designs) at once; any input may use a
broadcast batch of 1.

``reference_tracking_rollout`` re-builds the saturated-tracking dynamics
from elementary ops only; tests pin the fused vjps against it and against
finite differences.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad

_EPS = 1e-9


def control_points_to_refs(flat, n_agents: int, n_points: int, bern: np.ndarray):
    """Per-step reference points (T, n_agents, 2) from a flat control vector.

    ``flat`` is agent-major: [agent0 cp0 xy, agent0 cp1 xy, ..., agent1 ...].
    ``bern`` is the (T, n_points) Bernstein basis over normalized time.
    """
    ctrl = ad.reshape(flat, (n_agents, n_points, 2))
    cols = ad.reshape(ad.transpose(ctrl, (1, 0, 2)), (n_points, n_agents * 2))
    refs = ad.matmul(bern, cols)
    return ad.reshape(refs, (bern.shape[0], n_agents, 2))


def first_control_point(flat, n_agents: int, n_points: int):
    """Initial position of each agent (its first control point), (n_agents, 2)."""
    ctrl = ad.reshape(flat, (n_agents, n_points, 2))
    return ctrl[:, 0, :]


def _sat_backward(adj, u, nrm, sat_mask, any_sat, vmax):
    """Apply the (symmetric) saturation Jacobian to ``adj`` row-wise."""
    if not any_sat:
        return adj
    out = adj.copy()
    m = sat_mask
    u_m = u[m]
    n_m = nrm[m][:, None]
    a_m = adj[m]
    proj = (u_m * a_m).sum(axis=1, keepdims=True)
    out[m] = vmax * (a_m / n_m - u_m * proj / n_m ** 3)
    return out


def tracking_rollout(refs, p0, dt: float, gain: float, vmax: float):
    """Single-integrator agents tracking references with speed saturation.

    ``p_{t+1} = p_t + dt * sat(gain * (refs[t] - p_t), vmax)`` where ``sat``
    rescales to norm ``vmax`` when exceeded.  ``refs``: (T, N, 2); ``p0``:
    (N, 2).  Returns positions (T+1, N, 2).
    """
    refs_v = np.asarray(refs.value if isinstance(refs, ad.Node) else refs, float)
    p0_v = np.asarray(p0.value if isinstance(p0, ad.Node) else p0, float)
    steps = refs_v.shape[0]
    n_rows = p0_v.shape[0]

    positions = np.empty((steps + 1,) + p0_v.shape)
    u_all = np.empty((steps,) + p0_v.shape)
    n_all = np.empty((steps, n_rows))
    positions[0] = p0_v
    p = p0_v
    for t in range(steps):
        u = gain * (refs_v[t] - p)
        n = np.sqrt(u[:, 0] * u[:, 0] + u[:, 1] * u[:, 1])
        scale = np.minimum(1.0, vmax / np.maximum(n, _EPS))
        p = p + dt * u * scale[:, None]
        positions[t + 1] = p
        u_all[t] = u
        n_all[t] = n

    if not (isinstance(refs, ad.Node) or isinstance(p0, ad.Node)):
        return positions

    sat = n_all > vmax
    sat_any = sat.any(axis=1)

    def vjp(g):
        g = np.asarray(g)
        g_refs = np.empty_like(u_all)
        adj = g[steps].copy()
        for t in range(steps - 1, -1, -1):
            w = _sat_backward(adj, u_all[t], n_all[t], sat[t], sat_any[t], vmax)
            g_refs[t] = dt * gain * w
            adj = g[t] + adj - dt * gain * w
        return g_refs, adj

    return ad.Node(positions, (refs, p0), vjp)


def reference_tracking_rollout(refs, p0, dt: float, gain: float, vmax: float):
    """Elementary-ops version of :func:`tracking_rollout` (test oracle)."""
    steps = np.shape(refs.value if isinstance(refs, ad.Node) else refs)[0]
    frames = [p0]
    p = p0
    for t in range(steps):
        u = ad.mul(gain, ad.sub(refs[t], p))
        n = ad.sqrt(ad.add(ad.sum(ad.mul(u, u), axis=1), _EPS ** 2))
        scale = ad.minimum(1.0, ad.div(vmax, n))
        p = ad.add(p, ad.mul(dt, ad.mul(u, ad.reshape(scale, (-1, 1)))))
        frames.append(p)
    return ad.stack(frames, axis=0)


class _WindNet:
    """Force-capped 3-affine-layer tanh network; per-scenario weight batch."""

    def __init__(self, w1, b1, w2, b2, w3, b3, cap):
        # weights: (Bw, h1, 2), (Bw, h1), (Bw, h2, h1), (Bw, h2), (Bw, 2, h2), (Bw, 2)
        self.w1, self.b1, self.w2 = w1, b1, w2
        self.b2, self.w3, self.b3 = b2, w3, b3
        self.cap = cap

    def forward(self, p):
        # p: (B, n, 2) -> force (B, n, 2) plus cached activations
        z1 = np.tanh(p @ self.w1.transpose(0, 2, 1) + self.b1[:, None, :])
        z2 = np.tanh(z1 @ self.w2.transpose(0, 2, 1) + self.b2[:, None, :])
        u = z2 @ self.w3.transpose(0, 2, 1) + self.b3[:, None, :]
        nrm = np.sqrt((u * u).sum(axis=-1) + _EPS ** 2)
        force = self.cap * (np.tanh(nrm) / nrm)[..., None] * u
        return force, (z1, z2, u, nrm)

    def backward(self, p, cache, g_force, grads):
        """Accumulate weight grads into ``grads`` dict; return d/dp."""
        z1, z2, u, nrm = cache
        th = np.tanh(nrm)
        c1 = th / nrm
        c2 = 1.0 - th * th
        proj = (u * g_force).sum(axis=-1, keepdims=True)
        gu = self.cap * (c1[..., None] * g_force + ((c2 - c1) / nrm ** 2)[..., None] * proj * u)
        gz2 = gu @ self.w3
        grads["w3"] += gu.transpose(0, 2, 1) @ z2
        grads["b3"] += gu.sum(axis=1)
        gh2 = (1.0 - z2 * z2) * gz2
        grads["w2"] += gh2.transpose(0, 2, 1) @ z1
        grads["b2"] += gh2.sum(axis=1)
        gz1 = gh2 @ self.w2
        gh1 = (1.0 - z1 * z1) * gz1
        grads["w1"] += gh1.transpose(0, 2, 1) @ p
        grads["b1"] += gh1.sum(axis=1)
        return gh1 @ self.w1


def pd_wind_rollout(refs, p0, wind_parts, dt: float, kp: float, kd: float,
                    mass: float, cap: float):
    """Double-integrator agents under PD tracking and a wind force field.

    ``a = kp*(ref - p) - kd*v + F(p)/mass`` with ``v, p`` advanced by
    symplectic Euler.  ``refs``: (T, Br, n, 2); ``p0``: (Bp, n, 2);
    ``wind_parts``: tuple (w1, b1, w2, b2, w3, b3) with leading batch Bw.
    All batch axes broadcast against each other.  Returns (T+1, B, n, 2).
    """
    is_node = isinstance(refs, ad.Node) or isinstance(p0, ad.Node) or any(
        isinstance(w, ad.Node) for w in wind_parts)
    refs_v = np.asarray(refs.value if isinstance(refs, ad.Node) else refs, float)
    p0_v = np.asarray(p0.value if isinstance(p0, ad.Node) else p0, float)
    parts_v = [np.asarray(w.value if isinstance(w, ad.Node) else w, float)
               for w in wind_parts]
    net = _WindNet(*parts_v, cap=cap)

    steps = refs_v.shape[0]
    batch = max(refs_v.shape[1], p0_v.shape[0], parts_v[0].shape[0])
    n_agents = p0_v.shape[1]

    positions = np.empty((steps + 1, batch, n_agents, 2))
    caches = []
    p = np.broadcast_to(p0_v, (batch, n_agents, 2)).copy()
    v = np.zeros_like(p)
    positions[0] = p
    for t in range(steps):
        force, cache = net.forward(p)
        caches.append(cache)
        a = kp * (refs_v[t] - p) - kd * v + force / mass
        v = v + dt * a
        p = p + dt * v
        positions[t + 1] = p

    if not is_node:
        return positions

    def vjp(g):
        g = np.asarray(g)
        g_refs = np.zeros((steps, batch, n_agents, 2))
        wgrads = {
            "w1": np.zeros((batch,) + parts_v[0].shape[1:]),
            "b1": np.zeros((batch,) + parts_v[1].shape[1:]),
            "w2": np.zeros((batch,) + parts_v[2].shape[1:]),
            "b2": np.zeros((batch,) + parts_v[3].shape[1:]),
            "w3": np.zeros((batch,) + parts_v[4].shape[1:]),
            "b3": np.zeros((batch,) + parts_v[5].shape[1:]),
        }
        ap = g[steps].copy()
        av = np.zeros_like(ap)
        for t in range(steps - 1, -1, -1):
            av = av + dt * ap
            ga = dt * av
            g_refs[t] = kp * ga
            gp_wind = net.backward(positions[t], caches[t], ga / mass, wgrads)
            ap = g[t] + ap - kp * ga + gp_wind
            av = av - kd * ga
        g_p0 = ap if p0_v.shape[0] == batch else ap.sum(axis=0, keepdims=True)
        g_refs_out = g_refs if refs_v.shape[1] == batch \
            else g_refs.sum(axis=1, keepdims=True)
        order = ("w1", "b1", "w2", "b2", "w3", "b3")
        g_parts = []
        for name, val in zip(order, parts_v):
            acc = wgrads[name]
            g_parts.append(acc if val.shape[0] == batch else acc.sum(axis=0, keepdims=True))
        return (g_refs_out, g_p0, *g_parts)

    parents = (refs, p0, *wind_parts)
    return ad.Node(positions, parents, vjp)
