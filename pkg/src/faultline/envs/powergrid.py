"""AC power-flow security dispatch environment.

The design vector holds generator real-power and voltage setpoints plus
load real/reactive draws; the exogenous vector holds one state value per
transmission line, squashed through a sigmoid to scale the line's nominal
admittance (large negative values model outages).  The simulator solves
the AC power-flow equations by Newton's method in rectangular voltage
coordinates (every residual is quadratic, so the whole pipeline stays
inside the engine's op set), then the cost combines quadratic generation
cost with hinge penalties on generator, load, and voltage-magnitude
limits.  Gradients flow through the solve by the adjoint rule: one linear
solve with the transposed power-flow Jacobian per backward pass.

Case files use a line-tagged plain-text layout (see ``parse_case``); all
quantities are per-unit on the case's MVA base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .. import autodiff as ad
from ..distributions import DiagonalGaussian, SmoothedUniformBox
from .base import Environment, Trajectory

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50
PENALTY_COEFF = 100.0       # hinge penalty weight on violated limits
DIVERGED_COST = 1e4
# prior mean so each line's state is negative (outage-leaning) w.p. 0.05
LINE_PRIOR_MEAN = 1.6449
LINE_PRIOR_STD = 1.0


class NewtonError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"power flow did not converge (residual {residual:.3e})")
        self.residual = residual


@dataclass
class GridCase:
    """Network description; array fields are aligned with the case tables."""

    base_mva: float
    bus_vmin: np.ndarray
    bus_vmax: np.ndarray
    bus_type: np.ndarray          # 1 PQ, 2 PV, 3 slack
    line_from: np.ndarray
    line_to: np.ndarray
    line_g_nom: np.ndarray
    line_b_nom: np.ndarray
    gen_bus: np.ndarray
    gen_pmin: np.ndarray
    gen_pmax: np.ndarray
    gen_qmin: np.ndarray
    gen_qmax: np.ndarray
    gen_cost: np.ndarray          # (n_gen, 3): a, b, c
    load_bus: np.ndarray
    load_p_nom: np.ndarray
    load_q_nom: np.ndarray
    load_pmin: np.ndarray
    load_pmax: np.ndarray
    load_qmin: np.ndarray
    load_qmax: np.ndarray
    load_weight: np.ndarray

    @property
    def n_bus(self) -> int:
        return self.bus_type.shape[0]

    @property
    def n_line(self) -> int:
        return self.line_from.shape[0]

    @property
    def n_gen(self) -> int:
        return self.gen_bus.shape[0]

    @property
    def n_load(self) -> int:
        return self.load_bus.shape[0]

    def validate(self):
        slack = np.flatnonzero(self.bus_type == 3)
        if slack.size != 1:
            raise ValueError("case: exactly one slack bus required")
        if np.unique(self.gen_bus).size != self.n_gen:
            raise ValueError("case: at most one generator per bus")
        if int(slack[0]) not in set(self.gen_bus.tolist()):
            raise ValueError("case: the slack bus must host a generator")
        gen_buses = set(self.gen_bus.tolist())
        for i, t in enumerate(self.bus_type):
            if t in (2, 3) and i not in gen_buses:
                raise ValueError(f"case: bus {i + 1} marked PV/slack but has no generator")
            if t == 1 and i in gen_buses:
                raise ValueError(f"case: bus {i + 1} hosts a generator but is typed PQ")
        for lo, hi, name in ((self.bus_vmin, self.bus_vmax, "voltage"),
                             (self.gen_pmin, self.gen_pmax, "gen P"),
                             (self.gen_qmin, self.gen_qmax, "gen Q"),
                             (self.load_pmin, self.load_pmax, "load P"),
                             (self.load_qmin, self.load_qmax, "load Q")):
            if not np.all(lo < hi):
                raise ValueError(f"case: {name} bounds must satisfy lower < upper")
        # connectivity
        seen = {0}
        frontier = [0]
        neighbors = [[] for _ in range(self.n_bus)]
        for a, b in zip(self.line_from, self.line_to):
            neighbors[a].append(b)
            neighbors[b].append(a)
        while frontier:
            for nb in neighbors[frontier.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    frontier.append(nb)
        if len(seen) != self.n_bus:
            raise ValueError("case: network is not connected")
        return self


def parse_case(text: str) -> GridCase:
    """Parse the line-tagged plain-text case format.

    Rows (whitespace separated; ``#`` comments):
        BASE_MVA mva
        BUS    id type vmin vmax            (type: 1 PQ, 2 PV, 3 slack)
        GEN    bus pmin pmax qmin qmax cost_a cost_b cost_c
        LOAD   bus p_nom q_nom pmin pmax qmin qmax weight
        BRANCH from to r x                  (series impedance, p.u.)
    Bus ids are 1-based and must be contiguous.
    """
    base = None
    bus_rows, gen_rows, load_rows, branch_rows = [], [], [], []
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        values = [float(v) for v in fields]
        if tag == "BASE_MVA":
            base = values[0]
        elif tag == "BUS":
            bus_rows.append(values)
        elif tag == "GEN":
            gen_rows.append(values)
        elif tag == "LOAD":
            load_rows.append(values)
        elif tag == "BRANCH":
            branch_rows.append(values)
        else:
            raise ValueError(f"case: unknown row tag {tag!r}")
    if base is None or not bus_rows or not branch_rows or not gen_rows:
        raise ValueError("case: BASE_MVA, BUS, GEN, and BRANCH sections are required")

    bus_rows.sort(key=lambda r: r[0])
    ids = [int(r[0]) for r in bus_rows]
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError("case: bus ids must be contiguous starting at 1")

    def bus_idx(v):
        i = int(v) - 1
        if not 0 <= i < len(ids):
            raise ValueError(f"case: unknown bus id {int(v)}")
        return i

    r = np.array([row[2] for row in branch_rows])
    x = np.array([row[3] for row in branch_rows])
    z2 = r * r + x * x
    if np.any(z2 <= 0):
        raise ValueError("case: branch impedance must be nonzero")

    case = GridCase(
        base_mva=base,
        bus_vmin=np.array([row[2] for row in bus_rows]),
        bus_vmax=np.array([row[3] for row in bus_rows]),
        bus_type=np.array([int(row[1]) for row in bus_rows]),
        line_from=np.array([bus_idx(row[0]) for row in branch_rows]),
        line_to=np.array([bus_idx(row[1]) for row in branch_rows]),
        line_g_nom=r / z2,
        line_b_nom=-x / z2,
        gen_bus=np.array([bus_idx(row[0]) for row in gen_rows]),
        gen_pmin=np.array([row[1] for row in gen_rows]),
        gen_pmax=np.array([row[2] for row in gen_rows]),
        gen_qmin=np.array([row[3] for row in gen_rows]),
        gen_qmax=np.array([row[4] for row in gen_rows]),
        gen_cost=np.array([row[5:8] for row in gen_rows]),
        load_bus=np.array([bus_idx(row[0]) for row in load_rows], dtype=int),
        load_p_nom=np.array([row[1] for row in load_rows]),
        load_q_nom=np.array([row[2] for row in load_rows]),
        load_pmin=np.array([row[3] for row in load_rows]),
        load_pmax=np.array([row[4] for row in load_rows]),
        load_qmin=np.array([row[5] for row in load_rows]),
        load_qmax=np.array([row[6] for row in load_rows]),
        load_weight=np.array([row[7] for row in load_rows]),
    )
    return case.validate()


def load_case(path) -> GridCase:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())


def bundled_case(name: str) -> GridCase:
    """Load one of the shipped cases ('case2' or 'case14')."""
    ref = resources.files("faultline.envs") / "cases" / f"{name}.case"
    return parse_case(ref.read_text(encoding="utf-8"))


def line_admittance(y_state, g_nom, b_nom):
    """Effective (G, B) of a line: sigmoid(state) scales the nominal value."""
    s = ad.sigmoid(y_state)
    return ad.mul(s, g_nom), ad.mul(s, b_nom)


@dataclass
class PowerFlowSolution:
    v_mag: np.ndarray     # per-bus |V| (p.u.)
    theta: np.ndarray     # per-bus angle (rad), slack at 0
    p: np.ndarray         # per-bus net real injection (p.u.)
    q: np.ndarray         # per-bus net reactive injection (p.u.)
    residual: float
    iterations: int


class GridEnv(Environment):
    """Security-dispatch environment over one :class:`GridCase`."""

    def __init__(self, case: GridCase):
        self.case = case.validate()
        n = case.n_bus
        self.slack = int(np.flatnonzero(case.bus_type == 3)[0])
        self.non_slack = np.array([i for i in range(n) if i != self.slack], dtype=int)
        self.pq = np.flatnonzero(case.bus_type == 1)
        self.pv = np.flatnonzero(case.bus_type == 2)
        self.slack_gen = int(np.flatnonzero(case.gen_bus == self.slack)[0])

        self.gen_inc = np.zeros((n, case.n_gen))
        self.gen_inc[case.gen_bus, np.arange(case.n_gen)] = 1.0
        self.load_inc = np.zeros((n, case.n_load))
        for k, b in enumerate(case.load_bus):
            self.load_inc[b, k] = 1.0
        # line incidence: row per line, +1 at from bus, -1 at to bus
        self.line_inc = np.zeros((case.n_line, n))
        self.line_inc[np.arange(case.n_line), case.line_from] = 1.0
        self.line_inc[np.arange(case.n_line), case.line_to] = -1.0
        # V^2-row gen index per PV bus (one gen per bus, validated)
        bus_to_gen = {int(b): g for g, b in enumerate(case.gen_bus)}
        self.pv_gen = np.array([bus_to_gen[int(b)] for b in self.pv], dtype=int)

        self.dim_x = 2 * case.n_gen + 2 * case.n_load
        self.dim_y = case.n_line
        gen_v_lo = case.bus_vmin[case.gen_bus]
        gen_v_hi = case.bus_vmax[case.gen_bus]
        self.prior_x = SmoothedUniformBox(
            np.concatenate([case.gen_pmin, gen_v_lo, case.load_pmin, case.load_qmin]),
            np.concatenate([case.gen_pmax, gen_v_hi, case.load_pmax, case.load_qmax]))
        self.prior_y = DiagonalGaussian(
            np.full(self.dim_y, LINE_PRIOR_MEAN), np.full(self.dim_y, LINE_PRIOR_STD))

    # -- design vector layout ------------------------------------------------

    def split_design(self, x):
        ng, nl = self.case.n_gen, self.case.n_load
        return (x[0:ng], x[ng:2 * ng],
                x[2 * ng:2 * ng + nl], x[2 * ng + nl:2 * ng + 2 * nl])

    # -- admittance ------------------------------------------------------------

    def _gb_matrices_raw(self, y):
        s = 1.0 / (1.0 + np.exp(-np.asarray(y, dtype=float)))
        gl = s * self.case.line_g_nom
        bl = s * self.case.line_b_nom
        g = self.line_inc.T @ (self.line_inc * gl[:, None])
        b = self.line_inc.T @ (self.line_inc * bl[:, None])
        return g, b

    def _gb_matrices(self, y):
        gl, bl = line_admittance(y, self.case.line_g_nom, self.case.line_b_nom)
        g = ad.matmul(self.line_inc.T, ad.mul(self.line_inc, ad.reshape(gl, (-1, 1))))
        b = ad.matmul(self.line_inc.T, ad.mul(self.line_inc, ad.reshape(bl, (-1, 1))))
        return g, b

    # -- Newton solve in rectangular coordinates --------------------------------

    def _spec_injections(self, pg, vg, pl, ql):
        p_spec = self.gen_inc @ pg - self.load_inc @ pl
        q_spec = -self.load_inc @ ql
        v_set = vg
        return p_spec, q_spec, v_set

    def _assemble_state(self, z, v_slack):
        n = self.case.n_bus
        s = self.slack
        e = np.empty(n)
        f = np.empty(n)
        e[self.non_slack] = z[:n - 1]
        f[self.non_slack] = z[n - 1:]
        e[s] = v_slack
        f[s] = 0.0
        return e, f

    def _residual(self, e, f, g, b, p_spec, q_spec, v_set):
        ic = g @ e - b @ f
        is_ = g @ f + b @ e
        p = e * ic + f * is_
        q = f * ic - e * is_
        f_p = p[self.non_slack] - p_spec[self.non_slack]
        f_q = q[self.pq] - q_spec[self.pq]
        f_v = e[self.pv] ** 2 + f[self.pv] ** 2 - v_set[self.pv_gen] ** 2
        return np.concatenate([f_p, f_q, f_v]), (ic, is_, p, q)

    def _jacobian(self, e, f, g, b, ic, is_):
        n = self.case.n_bus
        de = np.diag(e)
        df = np.diag(f)
        dp_de = np.diag(ic) + de @ g + df @ b
        dp_df = np.diag(is_) - de @ b + df @ g
        dq_de = -np.diag(is_) + df @ g - de @ b
        dq_df = np.diag(ic) - df @ b - de @ g
        ns = self.non_slack
        rows = []
        rows.append(np.hstack([dp_de[np.ix_(ns, ns)], dp_df[np.ix_(ns, ns)]]))
        if self.pq.size:
            rows.append(np.hstack([dq_de[np.ix_(self.pq, ns)], dq_df[np.ix_(self.pq, ns)]]))
        if self.pv.size:
            dv_de = np.zeros((self.pv.size, n))
            dv_df = np.zeros((self.pv.size, n))
            dv_de[np.arange(self.pv.size), self.pv] = 2.0 * e[self.pv]
            dv_df[np.arange(self.pv.size), self.pv] = 2.0 * f[self.pv]
            rows.append(np.hstack([dv_de[:, ns], dv_df[:, ns]]))
        return np.vstack(rows)

    def _newton(self, xv, yv):
        """Solve the power flow; returns (z, e, f, jacobian, residual, iters)."""
        pg, vg, pl, ql = self.split_design(np.asarray(xv, dtype=float))
        g, b = self._gb_matrices_raw(yv)
        p_spec, q_spec, v_set = self._spec_injections(pg, vg, pl, ql)
        v_slack = vg[self.slack_gen]
        n = self.case.n_bus
        z = np.concatenate([np.ones(n - 1), np.zeros(n - 1)])  # flat start
        jac = None
        for it in range(NEWTON_MAX_ITER + 1):
            e, f = self._assemble_state(z, v_slack)
            res, (ic, is_, _, _) = self._residual(e, f, g, b, p_spec, q_spec, v_set)
            err = float(np.abs(res).max())
            jac = self._jacobian(e, f, g, b, ic, is_)
            if err < NEWTON_TOL:
                return z, e, f, jac, err, it
            if it == NEWTON_MAX_ITER or not math.isfinite(err):
                raise NewtonError(err if math.isfinite(err) else float("inf"))
            try:
                z = z + np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError:
                raise NewtonError(err) from None
        raise NewtonError(float("inf"))

    # -- adjoint-rule implicit node ----------------------------------------------

    def _df_dx(self, e, f, g, b, v_set):
        """Jacobian of the residual w.r.t. the design vector."""
        case = self.case
        n = case.n_bus
        ns = self.non_slack
        n_rows = (n - 1) + self.pq.size + self.pv.size
        out = np.zeros((n_rows, self.dim_x))
        ng, nl = case.n_gen, case.n_load
        # P rows: -dPspec/dPg and +dPspec-load part
        out[:n - 1, 0:ng] = -self.gen_inc[ns, :]
        out[:n - 1, 2 * ng:2 * ng + nl] = self.load_inc[ns, :]
        # Q rows: +Ql incidence
        r0 = n - 1
        out[r0:r0 + self.pq.size, 2 * ng + nl:] = self.load_inc[self.pq, :]
        # V^2 rows: -2 Vset on the PV gens' voltage setpoints
        r1 = r0 + self.pq.size
        out[r1 + np.arange(self.pv.size), ng + self.pv_gen] = -2.0 * v_set[self.pv_gen]
        # slack voltage enters every injection through e_slack
        s = self.slack
        col = ng + self.slack_gen
        dic = g[:, s]
        dis = b[:, s]
        dp = e * dic + f * dis
        dq = f * dic - e * dis
        out[:n - 1, col] += dp[ns]
        out[r0:r0 + self.pq.size, col] += dq[self.pq]
        return out

    def _df_dy(self, e, f, yv):
        """Jacobian of the residual w.r.t. the line states (n_rows, n_line)."""
        case = self.case
        n = case.n_bus
        s_val = 1.0 / (1.0 + np.exp(-np.asarray(yv, dtype=float)))
        dsig = s_val * (1.0 - s_val)
        dg = dsig * case.line_g_nom
        db = dsig * case.line_b_nom
        a_idx, b_idx = case.line_from, case.line_to
        de = e[a_idx] - e[b_idx]
        dfv = f[a_idx] - f[b_idx]
        alpha = dg * de - db * dfv
        beta = dg * dfv + db * de
        dp_a = e[a_idx] * alpha + f[a_idx] * beta
        dp_b = -(e[b_idx] * alpha + f[b_idx] * beta)
        dq_a = f[a_idx] * alpha - e[a_idx] * beta
        dq_b = -(f[b_idx] * alpha - e[b_idx] * beta)

        n_rows = (n - 1) + self.pq.size + self.pv.size
        out = np.zeros((n_rows, case.n_line))
        p_row = np.full(n, -1, dtype=int)     # bus -> P-row index
        p_row[self.non_slack] = np.arange(n - 1)
        q_row = np.full(n, -1, dtype=int)
        q_row[self.pq] = (n - 1) + np.arange(self.pq.size)
        for ell in range(case.n_line):
            a, bb = a_idx[ell], b_idx[ell]
            if p_row[a] >= 0:
                out[p_row[a], ell] += dp_a[ell]
            if p_row[bb] >= 0:
                out[p_row[bb], ell] += dp_b[ell]
            if q_row[a] >= 0:
                out[q_row[a], ell] += dq_a[ell]
            if q_row[bb] >= 0:
                out[q_row[bb], ell] += dq_b[ell]
        return out

    def _solution_state(self, x, y):
        """Power-flow state (e_ns, f_ns) as an implicit graph node.

        Backward solves the transposed Newton Jacobian for the cotangent and
        pushes ``-lambda^T dF/d(x, y)`` to the inputs.
        """
        xv = np.asarray(x.value if isinstance(x, ad.Node) else x, dtype=float)
        yv = np.asarray(y.value if isinstance(y, ad.Node) else y, dtype=float)
        z, e, f, jac, _, _ = self._newton(xv, yv)
        if not (isinstance(x, ad.Node) or isinstance(y, ad.Node)):
            return z
        _, vg, _, _ = self.split_design(xv)
        v_set = vg

        def vjp(g_cot):
            try:
                lam = np.linalg.solve(jac.T, np.asarray(g_cot, dtype=float))
            except np.linalg.LinAlgError:
                raise ad.AutodiffError("singular power-flow Jacobian in adjoint solve") from None
            gx = -self._df_dx(e, f, *self._gb_matrices_raw(yv), v_set).T @ lam
            gy = -self._df_dy(e, f, yv).T @ lam
            return gx, gy

        return ad.Node(z, (x, y), vjp)

    # -- cost -----------------------------------------------------------------

    @staticmethod
    def _bound_penalty(values, lo, hi):
        over = ad.sum(ad.hinge(ad.sub(values, hi)))
        under = ad.sum(ad.hinge(ad.sub(lo, values)))
        return ad.mul(PENALTY_COEFF, ad.add(over, under))

    def _cost_expr(self, x, y, z):
        """Cost from the solved state; differentiable in x, y, z."""
        case = self.case
        n = case.n_bus
        pg, vg, pl, ql = self.split_design(x)
        g, b = self._gb_matrices(y)

        e_rest = z[0:n - 1]
        f_rest = z[n - 1:]
        s = self.slack
        ns_before = int(np.sum(self.non_slack < s))  # buses listed before slack
        v_slack = ad.reshape(vg[self.slack_gen], (1,))
        e_full = ad.concat([e_rest[:ns_before], v_slack, e_rest[ns_before:]])
        f_full = ad.concat([f_rest[:ns_before], np.zeros(1), f_rest[ns_before:]])

        ic = ad.sub(ad.matvec(g, e_full), ad.matvec(b, f_full))
        is_ = ad.add(ad.matvec(g, f_full), ad.matvec(b, e_full))
        p = ad.add(ad.mul(e_full, ic), ad.mul(f_full, is_))
        q = ad.sub(ad.mul(f_full, ic), ad.mul(e_full, is_))
        v_mag = ad.sqrt(ad.add(ad.mul(e_full, e_full), ad.mul(f_full, f_full)))

        # actual generator outputs: slack P from the solve, Q always from it
        p_slack = ad.add(p[s], ad.dot(self.load_inc[s], pl))
        q_gen = ad.add(q[case.gen_bus], ad.matvec(self.load_inc[case.gen_bus, :], ql))

        a_c, b_c, c_c = case.gen_cost[:, 0], case.gen_cost[:, 1], case.gen_cost[:, 2]
        sg = self.slack_gen
        p_out = [pg[k] if k != sg else p_slack for k in range(case.n_gen)]
        p_gen = ad.stack(p_out)
        gen_cost = ad.sum(ad.add(ad.add(ad.mul(a_c, ad.mul(p_gen, p_gen)),
                                        ad.mul(b_c, p_gen)), c_c))
        dp = ad.sub(pl, case.load_p_nom)
        dq = ad.sub(ql, case.load_q_nom)
        load_cost = ad.sum(ad.mul(case.load_weight,
                                  ad.add(ad.mul(dp, dp), ad.mul(dq, dq))))

        penalty = ad.add(
            ad.add(self._bound_penalty(p_gen, case.gen_pmin, case.gen_pmax),
                   self._bound_penalty(q_gen, case.gen_qmin, case.gen_qmax)),
            ad.add(ad.add(self._bound_penalty(pl, case.load_pmin, case.load_pmax),
                          self._bound_penalty(ql, case.load_qmin, case.load_qmax)),
                   self._bound_penalty(v_mag, case.bus_vmin, case.bus_vmax)))
        return ad.add(ad.add(gen_cost, load_cost), penalty)

    # -- environment contract ------------------------------------------------------

    def simulate_cost(self, x, y):
        try:
            z = self._solution_state(x, y)
        except NewtonError as err:
            return DIVERGED_COST + min(err.residual, DIVERGED_COST)
        return self._cost_expr(x, y, z)

    def solve(self, x, y) -> PowerFlowSolution:
        xv = self.validate_design(np.asarray(x, dtype=float))
        yv = self.validate_disturbance(np.asarray(y, dtype=float))
        z, e, f, _, res, iters = self._newton(xv, yv)
        g, b = self._gb_matrices_raw(yv)
        ic = g @ e - b @ f
        is_ = g @ f + b @ e
        return PowerFlowSolution(
            v_mag=np.sqrt(e * e + f * f),
            theta=np.arctan2(f, e),
            p=e * ic + f * is_,
            q=f * ic - e * is_,
            residual=res,
            iterations=iters,
        )

    def mismatch_residual(self, x, y, solution: PowerFlowSolution) -> float:
        """Independent residual check via complex phasor arithmetic."""
        xv = np.asarray(x, dtype=float)
        yv = np.asarray(y, dtype=float)
        pg, vg, pl, ql = self.split_design(xv)
        s_scale = 1.0 / (1.0 + np.exp(-yv))
        y_line = s_scale * (self.case.line_g_nom + 1j * self.case.line_b_nom)
        n = self.case.n_bus
        ybus = np.zeros((n, n), dtype=complex)
        for ell in range(self.case.n_line):
            a, b = self.case.line_from[ell], self.case.line_to[ell]
            ybus[a, a] += y_line[ell]
            ybus[b, b] += y_line[ell]
            ybus[a, b] -= y_line[ell]
            ybus[b, a] -= y_line[ell]
        v = solution.v_mag * np.exp(1j * solution.theta)
        s_inj = v * np.conj(ybus @ v)
        p_spec, q_spec, v_set = self._spec_injections(pg, vg, pl, ql)
        res_p = np.abs(s_inj.real[self.non_slack] - p_spec[self.non_slack])
        res_q = np.abs(s_inj.imag[self.pq] - q_spec[self.pq])
        res_v = np.abs(solution.v_mag[self.pv] ** 2 - v_set[self.pv_gen] ** 2)
        parts = [res_p, res_q, res_v] if self.pv.size else [res_p, res_q]
        return float(np.concatenate(parts).max())

    def cost_and_gradients(self, x, y):
        """Cost plus its gradients w.r.t. x and y through the implicit solve."""
        xv = self.validate_design(np.asarray(x, dtype=float))
        yv = self.validate_disturbance(np.asarray(y, dtype=float))
        joint = np.concatenate([xv, yv])

        def expr(v):
            return self.simulate_cost(v[:self.dim_x], v[self.dim_x:])

        res = ad.value_and_grad(expr, joint)
        return res.value, res.gradient[:self.dim_x], res.gradient[self.dim_x:]

    def trace(self, x, y) -> Trajectory:
        return Trajectory(np.array([0.0]), self.solve(x, y))
