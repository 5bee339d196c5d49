"""Daily unit-commitment / economic-dispatch model for one fine scenario.

Candidate capacities enter only through right-hand sides,
``rhs(z) = rhs0 + Cz @ z`` with ``z`` the candidate coverage vector, so a
built model can be re-targeted to another ``z`` without rebuilding and the
coupling duals give Benders subgradients directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..grid import ExpansionState, PowerSystem
from ..scenario import FineScenario
from ..solver import LinearModel, ModelBuilder
from .piecewise import piecewise_linearize

DEFAULT_SEGMENTS = 4


@dataclass(frozen=True, eq=False)
class UCProblem:
    model: LinearModel  # right-hand side evaluated at ``z``
    rhs0: np.ndarray
    Cz: sp.csr_matrix  # rows x candidates
    z: np.ndarray
    hours: int

    @property
    def coupling_rows(self) -> np.ndarray:
        return np.unique(self.Cz.nonzero()[0])

    @property
    def num_binaries(self) -> int:
        return int(self.model.integer.sum())

    def at(self, z) -> "UCProblem":
        z = np.asarray(z, float)
        return UCProblem(self.model.replace(rhs=self.rhs0 + self.Cz @ z), self.rhs0, self.Cz, z, self.hours)

    def index(self, block: str) -> np.ndarray:
        return self.model.var_blocks[block]


class _Coupled:
    """ModelBuilder wrapper collecting the ``Cz`` entries of coupling rows."""

    def __init__(self, n_cand: int):
        self.b = ModelBuilder()
        self.n_cand = n_cand
        self.cz_rows: list[np.ndarray] = []
        self.cz_cols: list[np.ndarray] = []
        self.cz_vals: list[np.ndarray] = []

    def coupling(self, count, rows, cols, vals, sense, cand, coeff, name):
        """Rows ``A y (sense) coeff * z[cand]``; one candidate per row."""
        idx = self.b.add_rows(count, rows, cols, vals, sense, 0.0, name=name)
        self.cz_rows.append(idx)
        self.cz_cols.append(np.broadcast_to(np.asarray(cand), (count,)).astype(np.int64))
        self.cz_vals.append(np.broadcast_to(np.asarray(coeff, float), (count,)).astype(float))
        return idx

    def finish(self, z):
        model = self.b.build()
        m = model.num_rows
        if self.cz_rows:
            r = np.concatenate(self.cz_rows)
            c = np.concatenate(self.cz_cols)
            v = np.concatenate(self.cz_vals)
        else:
            r = c = np.zeros(0, np.int64)
            v = np.zeros(0)
        Cz = sp.csr_matrix((v, (r, c)), shape=(m, self.n_cand))
        rhs0 = model.rhs.copy()
        return UCProblem(model.replace(rhs=rhs0 + Cz @ z), rhs0, Cz, z, 0)


def coverage_vector(system: PowerSystem, capacities) -> np.ndarray:
    """Normalize ``z`` / :class:`ExpansionState` / ``None`` into a coverage vector."""
    n = system.n_candidates
    if capacities is None:
        return np.zeros(n)
    if isinstance(capacities, ExpansionState):
        return np.array([capacities.capacity.get(a.id, 0.0) / a.capacity for a in system.candidate_assets])
    z = np.asarray(capacities, float).ravel()
    if z.size != n:
        raise ValueError(f"expected {n} candidate entries, got {z.size}")
    if np.any(z < -1e-9) or np.any(z > 1 + 1e-9):
        raise ValueError("coverage must lie in [0, 1]")
    return z


def build_uc(system: PowerSystem, capacities, scenario: FineScenario, *,
             segments: int = DEFAULT_SEGMENTS) -> UCProblem:
    """UC/ED MILP of one operating day under ``scenario`` with candidates at ``capacities``.

    Binary variables: ``alpha`` (commitment) and ``gamma`` (startup) for every
    non-penalty generator and hour. Penalty generators supply any shortfall at
    the value of lost load so the model is always feasible.
    """
    z = coverage_vector(system, capacities)
    D = np.asarray(scenario.demand, float)
    H = D.shape[1]
    units = system.unit_generators
    U = len(units)
    cand_pos = {a.id: i for i, a in enumerate(system.candidate_assets)}
    bus_pos = {b.id: i for i, b in enumerate(system.buses)}
    nb = len(system.buses)

    avail = np.ones((U, H))
    for g_i, g in enumerate(units):
        if g.renewable:
            avail[g_i] = scenario.availability_of(g.id)
    pmax = np.array([g.p_max for g in units])
    pmin = np.array([g.p_min for g in units])

    cb = _Coupled(system.n_candidates)
    b = cb.b

    pwl = [piecewise_linearize(g.a, g.b, g.c, g.p_max, segments) for g in units]
    gamma_cost = np.array([[g.startup_cost] * H for g in units]).reshape(U, H)
    alpha = b.add_vars((U, H), ub=1.0, cost=np.repeat([[g.a] for g in units], H, axis=1),
                       integer=True, name="alpha")
    gamma = b.add_vars((U, H), ub=1.0, cost=gamma_cost, integer=True, name="gamma")
    lin = np.array([pw.segments == 1 for pw in pwl])
    p_cost = np.where(lin, [pw.slopes[0] for pw in pwl], 0.0)
    p = b.add_vars((U, H), ub=pmax[:, None] * np.ones(H), cost=p_cost[:, None] * np.ones(H), name="p")
    s = b.add_vars((U, H), ub=pmax[:, None] * np.ones(H), name="s")

    # piecewise segments: p = sum_k delta_k for convex multi-segment costs
    seg_units = np.flatnonzero(~lin)
    if seg_units.size:
        K = segments
        widths = np.array([pwl[g].widths for g in seg_units])
        slopes = np.array([pwl[g].slopes for g in seg_units])
        delta = b.add_vars((len(seg_units), H, K), ub=np.repeat(widths[:, None, :], H, axis=1),
                           cost=np.repeat(slopes[:, None, :], H, axis=1), name="delta")
        n = len(seg_units) * H
        rows = np.repeat(np.arange(n), K + 1)
        cols = np.concatenate([p[seg_units].reshape(-1, 1), delta.reshape(n, K)], axis=1).ravel()
        vals = np.tile(np.r_[1.0, -np.ones(K)], n)
        b.add_rows(n, rows, cols, vals, "=", 0.0, name="pwl")

    pens = system.penalty_generators
    pen_bus = np.array([bus_pos[g.bus] for g in pens], dtype=int)
    pen = b.add_vars((len(pens), H), ub=np.array([[g.p_max] for g in pens]) * np.ones(H) if pens else 0.0,
                     cost=np.array([[g.b] for g in pens]) * np.ones(H) if pens else 0.0, name="pen")

    # candidates can only commit once built
    cu = [g_i for g_i, g in enumerate(units) if not g.existing]
    if cu:
        n = len(cu) * H
        cb.coupling(n, np.arange(n), alpha[cu].ravel(), 1.0, "<=",
                    np.repeat([cand_pos[units[g].id] for g in cu], H), 1.0, "avail")

    # minimum up/down windows, alpha^0 = 0
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for g_i, g in enumerate(units):
        for L, sign in ((g.min_on, 1.0), (g.min_off, -1.0)):
            for h in range(H):
                for tau in range(h + 1, min(h + L, H)):
                    # up:   alpha^h - alpha^{h-1} - alpha^tau <= 0
                    # down: alpha^{h-1} - alpha^h + alpha^tau <= 1
                    cs = [alpha[g_i, h], alpha[g_i, tau]]
                    vs = [sign, -sign]
                    if h > 0:
                        cs.append(alpha[g_i, h - 1])
                        vs.append(-sign)
                    rows += [r] * len(cs)
                    cols += cs
                    vals += vs
                    rhs.append(0.0 if sign > 0 else 1.0)
                    r += 1
    if r:
        b.add_rows(r, rows, cols, vals, "<=", rhs, name="min_updown")

    # startup: gamma^h >= alpha^h - alpha^{h-1}
    n = U * H
    prev = np.concatenate([np.full((U, 1), -1), alpha[:, :-1]], axis=1).ravel()
    has_prev = prev >= 0
    rows = np.r_[np.arange(n), np.arange(n), np.arange(n)[has_prev]]
    cols = np.r_[gamma.ravel(), alpha.ravel(), prev[has_prev]]
    vals = np.r_[np.ones(n), -np.ones(n), np.ones(has_prev.sum())]
    b.add_rows(n, rows, cols, vals, ">=", 0.0, name="startup")

    # output plus reserve within committed (and available) capacity
    rows = np.r_[np.arange(n), np.arange(n), np.arange(n)]
    cols = np.r_[p.ravel(), s.ravel(), alpha.ravel()]
    vals = np.r_[np.ones(n), np.ones(n), -(pmax[:, None] * avail).ravel()]
    b.add_rows(n, rows, cols, vals, "<=", 0.0, name="capacity")
    if cu:
        m = len(cu) * H
        loc = np.arange(m)
        cb.coupling(m, np.r_[loc, loc], np.r_[p[cu].ravel(), s[cu].ravel()], 1.0, "<=",
                    np.repeat([cand_pos[units[g].id] for g in cu], H),
                    (pmax[cu, None] * avail[cu]).ravel(), "capacity_built")

    # minimum generation
    on = np.flatnonzero(pmin > 0)
    if on.size:
        m = on.size * H
        loc = np.arange(m)
        b.add_rows(m, np.r_[loc, loc], np.r_[p[on].ravel(), alpha[on].ravel()],
                   np.r_[np.ones(m), -np.repeat(pmin[on], H)], ">=", 0.0, name="min_gen")

    # spinning reserve per bus, shortfall priced at VOLL
    sr_bus = [j for j, bus in enumerate(system.buses) if bus.spinning_reserve > 0]
    if sr_bus:
        short = b.add_vars((len(sr_bus), H), cost=system.voll, name="reserve_short")
        rows, cols, vals = [], [], []
        for k, j in enumerate(sr_bus):
            bid = system.buses[j].id
            for h in range(H):
                row = k * H + h
                for g_i, g in enumerate(units):
                    if g.bus == bid:
                        rows.append(row); cols.append(s[g_i, h]); vals.append(1.0)
                rows.append(row); cols.append(short[k, h]); vals.append(1.0)
        b.add_rows(len(sr_bus) * H, rows, cols, vals, ">=",
                   np.repeat([system.buses[j].spinning_reserve for j in sr_bus], H), name="spinning")

    # ramping between consecutive hours
    if H > 1:
        m = U * (H - 1)
        loc = np.arange(m)
        now, before = p[:, 1:].ravel(), p[:, :-1].ravel()
        ramp = np.repeat([g.ramp for g in units], H - 1)
        b.add_rows(m, np.r_[loc, loc], np.r_[now, before], np.r_[np.ones(m), -np.ones(m)], "<=", ramp,
                   name="ramp_up")
        b.add_rows(m, np.r_[loc, loc], np.r_[before, now], np.r_[np.ones(m), -np.ones(m)], "<=", ramp,
                   name="ramp_down")

    # storage: r state of charge, u withdrawal (discharge), v injection (charge)
    stores = system.storages
    S = len(stores)
    if S:
        scap = np.array([st.capacity for st in stores])
        ub_first = np.ones((S, H)) * scap[:, None]
        ub_first[:, 0] = 0.0  # r^1 = 0
        rs = b.add_vars((S, H), ub=ub_first, name="r")
        us = b.add_vars((S, H), ub=scap[:, None] * np.ones(H), name="u")
        vs = b.add_vars((S, H), ub=scap[:, None] * np.ones(H), name="v")
        if H > 1:
            m = S * (H - 1)
            loc = np.arange(m)
            eff = np.repeat([st.efficiency for st in stores], H - 1)
            b.add_rows(m, np.r_[loc, loc, loc, loc],
                       np.r_[rs[:, 1:].ravel(), rs[:, :-1].ravel(), vs[:, :-1].ravel(), us[:, :-1].ravel()],
                       np.r_[np.ones(m), -np.ones(m), -eff, np.ones(m)], "=", 0.0, name="storage_balance")
        m = S * H
        loc = np.arange(m)
        b.add_rows(m, np.r_[loc, loc], np.r_[us.ravel(), rs.ravel()], np.r_[np.ones(m), -np.ones(m)], "<=", 0.0,
                   name="withdraw")
        cs_ = [i for i, st in enumerate(stores) if not st.existing]
        if cs_:
            m = len(cs_) * H
            cand = np.repeat([cand_pos[stores[i].id] for i in cs_], H)
            coeff = np.repeat(scap[cs_], H)
            for blk, nm in ((rs, "storage_cap"), (us, "storage_out"), (vs, "storage_in")):
                cb.coupling(m, np.arange(m), blk[cs_].ravel(), 1.0, "<=", cand, coeff, nm)

    # transmission: two directed arcs per line
    lines = system.lines
    Lc = len(lines)
    if Lc:
        flim = np.array([l.flow_limit for l in lines])
        f = b.add_vars((Lc, 2, H), ub=np.repeat(np.repeat(flim[:, None], 2, axis=1)[:, :, None], H, axis=2),
                       name="f")
        cl = [i for i, l in enumerate(lines) if not l.existing]
        if cl:
            m = len(cl) * 2 * H
            cand = np.repeat([cand_pos[lines[i].id] for i in cl], 2 * H)
            coeff = np.repeat(flim[cl], 2 * H)
            cb.coupling(m, np.arange(m), f[cl].ravel(), 1.0, "<=", cand, coeff, "flow_limit")

    # nodal balance: outflow - (1-B) inflow - generation - (u - v) = -D
    rows, cols, vals = [], [], []

    def put(bus_i, var_row, coeff):
        rows.append(bus_i * H + np.arange(H))
        cols.append(var_row)
        vals.append(np.full(H, coeff))

    for li, l in enumerate(lines):
        i, j = bus_pos[l.from_bus], bus_pos[l.to_bus]
        put(i, f[li, 0], 1.0)
        put(j, f[li, 0], -(1.0 - l.loss))
        put(j, f[li, 1], 1.0)
        put(i, f[li, 1], -(1.0 - l.loss))
    for g_i, g in enumerate(units):
        put(bus_pos[g.bus], p[g_i], -1.0)
    for k, g in enumerate(pens):
        put(pen_bus[k], pen[k], -1.0)
    for si, st in enumerate(stores):
        put(bus_pos[st.bus], us[si], -1.0)
        put(bus_pos[st.bus], vs[si], 1.0)
    b.add_rows(nb * H, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), "=", -D.ravel(),
               name="balance")

    out = cb.finish(z)
    return UCProblem(out.model, out.rhs0, out.Cz, z, H)


def uc_cost_breakdown(problem: UCProblem, x: np.ndarray) -> dict[str, float]:
    """Split an optimal UC objective into startup, generation and penalty parts."""
    c = problem.model.c
    parts = {}
    for blk, key in (("gamma", "startup"), ("alpha", "no_load"), ("p", "generation"), ("delta", "generation"),
                     ("pen", "unserved"), ("reserve_short", "unserved")):
        if blk in problem.model.var_blocks:
            idx = problem.model.var_blocks[blk].ravel()
            parts[key] = parts.get(key, 0.0) + float(c[idx] @ x[idx])
    return parts
