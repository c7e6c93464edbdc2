"""Variable indexing and sparse assembly of the integrated control MILP.

The full problem couples bus lines only through charger exclusion rows
between terminal visits of different lines; everything else is block
diagonal line by line.  Rows carry tags naming what they enforce so tests
and diagnostics can select them:

    entry-chain / entry-soc / entry-energy   committed first-segment closure
    no-overtaking                            arrival order per stop
    refused-cap                              refusals bounded by waiting pax
    dwell-chain                              time propagation at regular stops
    terminal-departure                       time propagation at the terminal
    mass-balance                             passenger load propagation
    soc-link / soc-terminal                  state-of-charge propagation
    energy-envelope                          convex travel-energy epigraph
    one-charger / charge-bigm                charger choice logic
    min-hold                                 holding covers the pax exchange
    min-soc-departure                        charge floor when leaving terminal
    headway-slack / terminal-soc-slack       objective epigraph rows
    same-line-exclusion                      known-order charger exclusivity
    cross-exclusion-a / cross-exclusion-b    relaxable cross-line exclusivity
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .config import CostParams
from .horizon import HorizonInstance

EUR_PER_MWH_TO_EUR_PER_KWS = 1.0 / 3.6e6  # price * P_char * c -> EUR

CROSS_TAGS = ("cross-exclusion-a", "cross-exclusion-b")


class AssemblyError(ValueError):
    pass


class MalformedSolutionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Variable indexing
# ---------------------------------------------------------------------------

class VariableIndex:
    """Bijection between structured variable keys and dense column indices.

    Key shapes:
        ("t"|"m"|"sig"|"tau"|"e"|"r"|"eta", line, bus, visit)
        ("w"|"c", line, bus, visit)          terminal visits only
        ("nu", line, bus)
        ("tau_in"|"e_in", line, bus)         committed-departure entry segment
        ("b", line, bus, visit, charger)
        ("psi", pair_index)

    Binary columns (all b, then all psi) form the contiguous tail.  Cross-line
    pairs of terminal visits are enumerated once each, oriented with the lower
    line index first.
    """

    def __init__(self, inst: HorizonInstance):
        self.inst = inst
        keys: list[tuple] = []

        terminal_visits: list[tuple[int, int, int]] = []
        for bh in inst.buses:
            for v, visit in enumerate(bh.visits):
                for kind in ("t", "m", "sig", "tau", "e", "r", "eta"):
                    keys.append((kind, bh.line, bh.bus, v))
                if visit.stop == 1:
                    keys.append(("w", bh.line, bh.bus, v))
                    keys.append(("c", bh.line, bh.bus, v))
                    terminal_visits.append((bh.line, bh.bus, v))
            keys.append(("nu", bh.line, bh.bus))
            if bh.start_kind == "departure":
                keys.append(("tau_in", bh.line, bh.bus))
                keys.append(("e_in", bh.line, bh.bus))

        self.n_continuous = len(keys)
        for (l, i, v) in terminal_visits:
            for o in range(1, inst.n_c + 1):
                keys.append(("b", l, i, v, o))

        self.pairs: list[tuple[tuple, tuple]] = []
        for a in range(len(terminal_visits)):
            for b in range(a + 1, len(terminal_visits)):
                va, vb = terminal_visits[a], terminal_visits[b]
                if va[0] == vb[0]:
                    continue
                if va[0] < vb[0]:
                    self.pairs.append((va, vb))
                else:
                    self.pairs.append((vb, va))
        self.pairs.sort()
        for p in range(len(self.pairs)):
            keys.append(("psi", p))

        self.keys = keys
        self.col = {k: j for j, k in enumerate(keys)}
        if len(self.col) != len(keys):
            raise AssemblyError("duplicate variable keys")
        self.n_cols = len(keys)
        self.terminal_visits = terminal_visits
        self.binary_cols = np.arange(self.n_continuous, self.n_cols, dtype=int)
        self.beta_size = len(self.pairs) * inst.n_c * 2

        self.line_cols: dict[int, np.ndarray] = {}
        for l in range(1, len(inst.lines) + 1):
            cols = [
                j
                for j, k in enumerate(keys)
                if k[0] != "psi" and k[1] == l
            ]
            self.line_cols[l] = np.array(cols, dtype=int)

    def col_of(self, *key) -> int:
        return self.col[key]

    def key_of(self, j: int) -> tuple:
        return self.keys[j]

    def psi_col(self, pair_index: int) -> int:
        return self.col[("psi", pair_index)]

    def beta_row(self, pair_index: int, charger: int, side: int) -> int:
        """Position of a relaxed row in the multiplier vector (side 0 = a, 1 = b)."""
        return (pair_index * self.inst.n_c + (charger - 1)) * 2 + side


def index_variables(inst: HorizonInstance) -> VariableIndex:
    return VariableIndex(inst)


# ---------------------------------------------------------------------------
# Problem containers
# ---------------------------------------------------------------------------

@dataclass
class LinearProblem:
    """min c @ x + c0  s.t.  a_ub x <= b_ub, a_eq x = b_eq, lb <= x <= ub."""

    c: np.ndarray
    c0: float
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    ub_tags: list[str] = field(default_factory=list)
    eq_tags: list[str] = field(default_factory=list)

    @property
    def n_cols(self) -> int:
        return self.c.shape[0]

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.c0


@dataclass
class MilpProblem(LinearProblem):
    """LinearProblem plus a designated set of binary columns."""

    binary_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    ub_lines: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    eq_lines: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def to_lp(self, fixed: dict[int, float] | None = None) -> LinearProblem:
        """Continuous relaxation; ``fixed`` pins columns via equal bounds."""
        lb, ub = self.lb.copy(), self.ub.copy()
        if fixed:
            for j, val in fixed.items():
                lb[j] = ub[j] = val
        return LinearProblem(
            c=self.c, c0=self.c0, a_ub=self.a_ub, b_ub=self.b_ub,
            a_eq=self.a_eq, b_eq=self.b_eq, lb=lb, ub=ub,
            ub_tags=self.ub_tags, eq_tags=self.eq_tags,
        )


def lp_relaxation(milp: MilpProblem) -> LinearProblem:
    """Drop integrality; binary columns keep their [0, 1] bounds."""
    return milp.to_lp()


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

class _Rows:
    def __init__(self):
        self.data: list[float] = []
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.rhs: list[float] = []
        self.tags: list[str] = []
        self.lines: list[int] = []

    def add(self, coeffs: dict[int, float], rhs: float, tag: str, line: int = 0):
        r = len(self.rhs)
        for j, v in coeffs.items():
            if v != 0.0:
                self.rows.append(r)
                self.cols.append(j)
                self.data.append(v)
        self.rhs.append(rhs)
        self.tags.append(tag)
        self.lines.append(line)

    def matrix(self, n_cols: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, (self.rows, self.cols)), shape=(len(self.rhs), n_cols)
        )


def _pred_term(index: VariableIndex, line: int, visit) -> tuple[int | None, float]:
    """Column of the paired predecessor arrival, or its constant value."""
    if visit.pred[0] == "var":
        _, pbus, pidx = visit.pred
        return index.col_of("t", line, pbus, pidx), 0.0
    return None, float(visit.pred[1])


def assemble_full_milp(
    inst: HorizonInstance, index: VariableIndex, params: CostParams | None = None
) -> MilpProblem:
    """Assemble the complete planning MILP over the given variable index."""
    params = params or CostParams()
    n = index.n_cols
    M = inst.big_M
    t_lo = inst.t_sim
    t_span = 2.0 * inst.T + 3600.0
    w_ub = inst.T
    c_ubs = {
        l + 1: 3600.0 * (meta.Q + 2.0 * inst.E0) / inst.P_char
        for l, meta in enumerate(inst.lines)
    }
    if M < 1.1 * (t_span + w_ub + max(c_ubs.values())):
        raise AssemblyError(
            f"big_M={M} too small to dominate horizon time spans ({t_span + w_ub:.0f}+)"
        )

    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    cost = np.zeros(n)
    ub_rows, eq_rows = _Rows(), _Rows()

    for bh in inst.buses:
        l, i = bh.line, bh.bus
        meta = inst.line_meta(l)
        Q = meta.Q
        col = index.col_of

        for v, visit in enumerate(bh.visits):
            t_v, m_v = col("t", l, i, v), col("m", l, i, v)
            sig_v, tau_v = col("sig", l, i, v), col("tau", l, i, v)
            e_v, r_v, eta_v = col("e", l, i, v), col("r", l, i, v), col("eta", l, i, v)

            lb[t_v], ub[t_v] = t_lo, t_lo + t_span
            lb[m_v], ub[m_v] = 0.0, inst.m_cap
            lb[sig_v], ub[sig_v] = 0.0, 1.0
            lb[tau_v], ub[tau_v] = visit.link.t_min, visit.link.t_max
            e_hi = max(
                a1 * tt + a2 * mm + a3
                for (a1, a2, a3) in visit.link.pieces
                for tt in (visit.link.t_min, visit.link.t_max)
                for mm in (0.0, inst.m_cap)
            )
            lb[e_v], ub[e_v] = 0.0, max(e_hi, 0.0) + 1.0
            lb[r_v], ub[r_v] = 0.0, visit.lam * t_span + 1.0
            lb[eta_v], ub[eta_v] = 0.0, t_span

            cost[r_v] = params.p_reject
            cost[eta_v] = params.p_reg

            pcol, pconst = _pred_term(index, l, visit)
            lam = visit.lam

            if pcol is not None:
                ub_rows.add({pcol: 1.0, t_v: -1.0}, 0.0, "no-overtaking", l)
                ub_rows.add({r_v: 1.0, t_v: -lam, pcol: lam}, 0.0, "refused-cap", l)
                ub_rows.add(
                    {t_v: 1.0, pcol: -1.0, eta_v: -1.0}, meta.H, "headway-slack", l
                )
            else:
                ub_rows.add({t_v: -1.0}, -pconst, "no-overtaking", l)
                ub_rows.add({r_v: 1.0, t_v: -lam}, -lam * pconst, "refused-cap", l)
                ub_rows.add({t_v: 1.0, eta_v: -1.0}, meta.H + pconst, "headway-slack", l)

            for (a1, a2, a3) in visit.link.pieces:
                ub_rows.add(
                    {tau_v: a1, m_v: a2, e_v: -1.0}, -a3, "energy-envelope", l
                )

            if visit.stop == 1:
                w_v, c_v = col("w", l, i, v), col("c", l, i, v)
                lb[w_v], ub[w_v] = 0.0, w_ub
                lb[c_v], ub[c_v] = 0.0, c_ubs[l]
                cost[c_v] = (visit.price or 0.0) * inst.P_char * EUR_PER_MWH_TO_EUR_PER_KWS
                bcols = [col("b", l, i, v, o) for o in range(1, inst.n_c + 1)]
                for bcol in bcols:
                    lb[bcol], ub[bcol] = 0.0, 1.0

                ub_rows.add({bc: 1.0 for bc in bcols}, 1.0, "one-charger", l)
                ub_rows.add(
                    {c_v: 1.0, **{bc: -M for bc in bcols}}, 0.0, "charge-bigm", l
                )
                dl = inst.d_pax * lam
                if pcol is not None:
                    ub_rows.add(
                        {t_v: dl, pcol: -dl, r_v: -inst.d_pax, w_v: -1.0},
                        0.0,
                        "min-hold",
                        l,
                    )
                else:
                    ub_rows.add(
                        {t_v: dl, r_v: -inst.d_pax, w_v: -1.0},
                        dl * pconst,
                        "min-hold",
                        l,
                    )
                soc_b = 2.0 * inst.E0 / Q
                ub_rows.add(
                    {sig_v: -1.0, c_v: -inst.P_char / Q, **{bc: soc_b for bc in bcols}},
                    -meta.sigma_min,
                    "min-soc-departure",
                    l,
                )

            if v + 1 < len(bh.visits):
                t_n = col("t", l, i, v + 1)
                m_n = col("m", l, i, v + 1)
                sig_n = col("sig", l, i, v + 1)
                dl = inst.d_pax * lam
                ml = inst.m_pax * lam

                if visit.stop == 1:
                    w_v, c_v = col("w", l, i, v), col("c", l, i, v)
                    bcols = [col("b", l, i, v, o) for o in range(1, inst.n_c + 1)]
                    ub_rows.add(
                        {
                            t_v: 1.0,
                            w_v: 1.0,
                            c_v: 1.0,
                            tau_v: 1.0,
                            t_n: -1.0,
                            **{bc: 2.0 * inst.d_char for bc in bcols},
                        },
                        0.0,
                        "terminal-departure",
                        l,
                    )
                    eq_rows.add(
                        {
                            sig_n: 1.0,
                            sig_v: -1.0,
                            c_v: -inst.P_char / Q,
                            e_v: 1.0 / Q,
                            **{bc: 2.0 * inst.E0 / Q for bc in bcols},
                        },
                        0.0,
                        "soc-terminal",
                        l,
                    )
                else:
                    if pcol is not None:
                        eq_rows.add(
                            {
                                t_n: 1.0,
                                t_v: -(1.0 + dl),
                                pcol: dl,
                                tau_v: -1.0,
                                r_v: inst.d_pax,
                            },
                            0.0,
                            "dwell-chain",
                            l,
                        )
                    else:
                        eq_rows.add(
                            {t_n: 1.0, t_v: -(1.0 + dl), tau_v: -1.0, r_v: inst.d_pax},
                            -dl * pconst,
                            "dwell-chain",
                            l,
                        )
                    eq_rows.add(
                        {sig_n: 1.0, sig_v: -1.0, e_v: 1.0 / Q}, 0.0, "soc-link", l
                    )

                xi = visit.xi
                if pcol is not None:
                    eq_rows.add(
                        {
                            m_n: 1.0,
                            m_v: -(1.0 - xi),
                            t_v: -ml,
                            pcol: ml,
                            r_v: inst.m_pax,
                        },
                        0.0,
                        "mass-balance",
                        l,
                    )
                else:
                    eq_rows.add(
                        {m_n: 1.0, m_v: -(1.0 - xi), t_v: -ml, r_v: inst.m_pax},
                        -ml * pconst,
                        "mass-balance",
                        l,
                    )

        # Initial conditions and the optional committed entry segment.
        v0 = 0
        t0c, m0c, s0c = col("t", l, i, v0), col("m", l, i, v0), col("sig", l, i, v0)
        lb[m0c] = ub[m0c] = bh.m0
        if bh.start_kind == "departure":
            tin, ein = col("tau_in", l, i), col("e_in", l, i)
            lnk = bh.entry_link
            lb[tin], ub[tin] = lnk.t_min, lnk.t_max
            e_hi = max(
                a1 * tt + a2 * bh.m0 + a3
                for (a1, a2, a3) in lnk.pieces
                for tt in (lnk.t_min, lnk.t_max)
            )
            lb[ein], ub[ein] = 0.0, max(e_hi, 0.0) + 1.0
            eq_rows.add({t0c: 1.0, tin: -1.0}, bh.start_time, "entry-chain", l)
            eq_rows.add({s0c: 1.0, ein: 1.0 / Q}, bh.sigma0, "entry-soc", l)
            for (a1, a2, a3) in lnk.pieces:
                ub_rows.add(
                    {tin: a1, ein: -1.0}, -(a2 * bh.m0 + a3), "entry-energy", l
                )
        else:
            lb[t0c] = ub[t0c] = bh.start_time
            lb[s0c] = ub[s0c] = bh.sigma0

        nu = col("nu", l, i)
        lb[nu], ub[nu] = 0.0, 1.0
        cost[nu] = params.p_end
        sig_last = col("sig", l, i, len(bh.visits) - 1)
        ub_rows.add(
            {nu: -1.0, sig_last: -1.0}, -inst.sigma_goal, "terminal-soc-slack", l
        )

    _add_exclusion_rows(inst, index, ub_rows, M)

    a_ub = ub_rows.matrix(n)
    a_eq = eq_rows.matrix(n)
    return MilpProblem(
        c=cost,
        c0=0.0,
        a_ub=a_ub,
        b_ub=np.array(ub_rows.rhs),
        a_eq=a_eq,
        b_eq=np.array(eq_rows.rhs),
        lb=lb,
        ub=ub,
        ub_tags=ub_rows.tags,
        eq_tags=eq_rows.tags,
        binary_cols=index.binary_cols.copy(),
        ub_lines=np.array(ub_rows.lines, dtype=int),
        eq_lines=np.array(eq_rows.lines, dtype=int),
    )


def _tchar_coeffs(index: VariableIndex, visit: tuple, sign: float) -> dict[int, float]:
    l, i, v = visit
    return {
        index.col_of("t", l, i, v): sign,
        index.col_of("w", l, i, v): sign,
    }


def _add_exclusion_rows(inst, index: VariableIndex, ub_rows: _Rows, M: float):
    col = index.col_of
    t_pred = {}
    for (l, i, v) in index.terminal_visits:
        t_pred[(l, i, v)] = inst.bus_horizon(l, i).visits[v].t_pred

    # Same-line pairs: charging order follows arrival order, no psi needed.
    by_line: dict[int, list] = {}
    for tv in index.terminal_visits:
        by_line.setdefault(tv[0], []).append(tv)
    for l, tvs in by_line.items():
        ordered = sorted(tvs, key=lambda tv: (t_pred[tv], tv))
        for a in range(len(ordered)):
            for b in range(a + 1, len(ordered)):
                u, vv = ordered[a], ordered[b]  # u is the earlier visit
                for o in range(1, inst.n_c + 1):
                    coeffs = {}
                    coeffs.update(_tchar_coeffs(index, u, 1.0))
                    coeffs[col("c", *u)] = 1.0
                    for cpos, sgn in _tchar_coeffs(index, vv, -1.0).items():
                        coeffs[cpos] = coeffs.get(cpos, 0.0) + sgn
                    coeffs[col("b", *u, o)] = M
                    coeffs[col("b", *vv, o)] = M
                    ub_rows.add(coeffs, 2.0 * M, "same-line-exclusion", l)

    # Cross-line pairs: order decided by the psi binary; these are the rows
    # relaxed by the Lagrangian procedure (psi = 1 means A charges after B).
    for p, (va, vb) in enumerate(index.pairs):
        psi = index.psi_col(p)
        for o in range(1, inst.n_c + 1):
            base = {
                col("b", *va, o): M,
                col("b", *vb, o): M,
            }
            ca = dict(base)
            ca.update(_tchar_coeffs(index, va, 1.0))
            ca[col("c", *va)] = 1.0
            for cpos, sgn in _tchar_coeffs(index, vb, -1.0).items():
                ca[cpos] = ca.get(cpos, 0.0) + sgn
            ca[psi] = -M
            ub_rows.add(ca, 2.0 * M, "cross-exclusion-a", 0)

            cb = dict(base)
            cb.update(_tchar_coeffs(index, vb, 1.0))
            cb[col("c", *vb)] = 1.0
            for cpos, sgn in _tchar_coeffs(index, va, -1.0).items():
                cb[cpos] = cb.get(cpos, 0.0) + sgn
            cb[psi] = M
            ub_rows.add(cb, 3.0 * M, "cross-exclusion-b", 0)


# ---------------------------------------------------------------------------
# Relaxed coupling block and line subproblems
# ---------------------------------------------------------------------------

@dataclass
class RelaxedCoupling:
    """The relaxable cross-line rows: A_relax z <= b_relax, one multiplier each."""

    a: sp.csr_matrix
    b: np.ndarray
    row_tags: list[str]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]


def split_relaxation(milp: MilpProblem) -> tuple[MilpProblem, RelaxedCoupling]:
    """Separate the cross-line exclusion rows from the rest of the problem."""
    tags = np.array(milp.ub_tags)
    cross = np.isin(tags, CROSS_TAGS)
    keep = ~cross
    kept = MilpProblem(
        c=milp.c,
        c0=milp.c0,
        a_ub=milp.a_ub[keep],
        b_ub=milp.b_ub[keep],
        a_eq=milp.a_eq,
        b_eq=milp.b_eq,
        lb=milp.lb,
        ub=milp.ub,
        ub_tags=[t for t, k in zip(milp.ub_tags, keep) if k],
        eq_tags=milp.eq_tags,
        binary_cols=milp.binary_cols,
        ub_lines=milp.ub_lines[keep],
        eq_lines=milp.eq_lines,
    )
    coupling = RelaxedCoupling(
        a=milp.a_ub[cross].tocsr(),
        b=milp.b_ub[cross],
        row_tags=[t for t, k in zip(milp.ub_tags, cross) if k],
    )
    return kept, coupling


def compute_psi(beta: np.ndarray, index: VariableIndex) -> np.ndarray:
    """Closed-form optimal charging-order binaries for fixed multipliers.

    For each cross-line pair, psi enters the Lagrangian only linearly; its
    optimal value follows the sign of the summed multiplier differences,
    with ties resolved to 0.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] != index.beta_size:
        raise ValueError(f"beta has size {beta.shape[0]}, expected {index.beta_size}")
    by_pair = beta.reshape(len(index.pairs), index.inst.n_c, 2)
    diff = (by_pair[:, :, 0] - by_pair[:, :, 1]).sum(axis=1)
    return np.maximum(np.sign(diff), 0.0)


def assemble_line_subproblem(
    inst: HorizonInstance,
    index: VariableIndex,
    line: int,
    beta: np.ndarray,
    psi: np.ndarray | None = None,
    *,
    full: MilpProblem | None = None,
    coupling: RelaxedCoupling | None = None,
    params: CostParams | None = None,
) -> tuple[MilpProblem, np.ndarray]:
    """Line subproblem under multipliers ``beta``.

    Returns the subproblem (over the line's own columns; binaries are its
    charging decisions) and the array of global column ids its variables map
    to.  ``psi`` is accepted for interface symmetry with the closed-form
    recovery; the charging-order variables never appear in a subproblem.
    """
    if full is None:
        full = assemble_full_milp(inst, index, params)
    if coupling is None:
        _, coupling = split_relaxation(full)
    cols = index.line_cols[line]
    line_ub = full.ub_lines == line
    line_eq = full.eq_lines == line
    tags = np.array(full.ub_tags)
    keep_ub = line_ub & ~np.isin(tags, CROSS_TAGS)

    price_adj = coupling.a.T @ np.asarray(beta, dtype=float)
    c_sub = full.c[cols] + price_adj[cols]

    sub = MilpProblem(
        c=c_sub,
        c0=0.0,
        a_ub=full.a_ub[keep_ub][:, cols].tocsr(),
        b_ub=full.b_ub[keep_ub],
        a_eq=full.a_eq[line_eq][:, cols].tocsr(),
        b_eq=full.b_eq[line_eq],
        lb=full.lb[cols],
        ub=full.ub[cols],
        ub_tags=[t for t, k in zip(full.ub_tags, keep_ub) if k],
        eq_tags=[t for t, k in zip(full.eq_tags, line_eq) if k],
        binary_cols=np.nonzero(cols >= index.n_continuous)[0],
    )
    return sub, cols


def lagrangian_residual(
    beta: np.ndarray, index: VariableIndex, coupling: RelaxedCoupling
) -> tuple[float, np.ndarray]:
    """Constant part of the decomposed Lagrangian and the optimal psi values."""
    beta = np.asarray(beta, dtype=float)
    psi = compute_psi(beta, index)
    price_adj = coupling.a.T @ beta
    psi_cols = np.array([index.psi_col(p) for p in range(len(index.pairs))], dtype=int)
    psi_term = float(price_adj[psi_cols] @ psi) if len(psi_cols) else 0.0
    return psi_term - float(beta @ coupling.b), psi


def relaxed_penalty(z: np.ndarray, beta: np.ndarray, coupling: RelaxedCoupling) -> float:
    """beta' (A_relax z - b_relax), the relaxation term of the Lagrangian."""
    g = coupling.a @ np.asarray(z, dtype=float) - coupling.b
    return float(np.asarray(beta, dtype=float) @ g)


# ---------------------------------------------------------------------------
# Schedule extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChargingEvent:
    line: int
    bus: int
    k: int
    start: float
    duration: float
    charger: int
    visit: tuple[int, int, int]  # (line, bus, visit position)


@dataclass
class ChargingSchedule:
    """Per-charger, time-sorted charging events."""

    n_c: int
    events: dict[int, list[ChargingEvent]]

    def all_events(self) -> list[ChargingEvent]:
        return [ev for evs in self.events.values() for ev in evs]

    def to_csv(self) -> str:
        lines = ["charger,line,bus,visit,start_s,duration_s"]
        for o in sorted(self.events):
            for ev in self.events[o]:
                lines.append(
                    f"{o},{ev.line},{ev.bus},{ev.k},{ev.start:.6f},{ev.duration:.6f}"
                )
        return "\n".join(lines) + "\n"


def extract_schedule(
    z: np.ndarray, index: VariableIndex, inst: HorizonInstance
) -> ChargingSchedule:
    """Charging events implied by a solution vector.

    Event start is arrival + holding + hookup delay.  A visit with more than
    one active charging decision is malformed.
    """
    events: dict[int, list[ChargingEvent]] = {o: [] for o in range(1, inst.n_c + 1)}
    for (l, i, v) in index.terminal_visits:
        bvals = [
            (o, z[index.col_of("b", l, i, v, o)]) for o in range(1, inst.n_c + 1)
        ]
        active = [o for o, bv in bvals if bv > 0.5]
        if len(active) > 1:
            raise MalformedSolutionError(
                f"visit (line {l}, bus {i}) uses {len(active)} chargers at once"
            )
        if not active:
            continue
        o = active[0]
        start = (
            z[index.col_of("t", l, i, v)]
            + z[index.col_of("w", l, i, v)]
            + inst.d_char
        )
        duration = max(float(z[index.col_of("c", l, i, v)]), 0.0)
        k = inst.bus_horizon(l, i).visits[v].k
        events[o].append(
            ChargingEvent(
                line=l, bus=i, k=k, start=float(start), duration=duration,
                charger=o, visit=(l, i, v),
            )
        )
    for o in events:
        events[o].sort(key=lambda ev: (ev.start, ev.line, ev.bus, ev.k))
    return ChargingSchedule(n_c=inst.n_c, events=events)


# ---------------------------------------------------------------------------
# Solution checking and serialization
# ---------------------------------------------------------------------------

def check_solution(
    milp: MilpProblem, x: np.ndarray, tol: float = 1e-6
) -> list[str]:
    """Violations of rows, bounds, and integrality; empty when feasible.

    Row residuals are scaled by the row's coefficient magnitude so big-M rows
    are judged at the same relative tolerance as unit rows.
    """
    x = np.asarray(x, dtype=float)
    out: list[str] = []
    if x.shape[0] != milp.n_cols:
        return [f"solution has {x.shape[0]} entries, expected {milp.n_cols}"]

    def row_scale(a_csr, r):
        sl = a_csr[r]
        return max(1.0, float(np.abs(sl.data).max()) if sl.nnz else 1.0)

    res_ub = milp.a_ub @ x - milp.b_ub
    for r in np.nonzero(res_ub > 0)[0]:
        s = row_scale(milp.a_ub, r)
        if res_ub[r] > tol * s:
            out.append(f"{milp.ub_tags[r]}[{r}]: violated by {res_ub[r]:.3e}")
    res_eq = np.abs(milp.a_eq @ x - milp.b_eq)
    for r in np.nonzero(res_eq > 0)[0]:
        s = row_scale(milp.a_eq, r)
        if res_eq[r] > tol * s:
            out.append(f"{milp.eq_tags[r]}[{r}]: residual {res_eq[r]:.3e}")
    bad_lb = np.nonzero(x < milp.lb - tol * np.maximum(1.0, np.abs(milp.lb)))[0]
    for j in bad_lb:
        out.append(f"lb[{j}]: {x[j]:.6g} < {milp.lb[j]:.6g}")
    bad_ub = np.nonzero(x > milp.ub + tol * np.maximum(1.0, np.abs(milp.ub)))[0]
    for j in bad_ub:
        out.append(f"ub[{j}]: {x[j]:.6g} > {milp.ub[j]:.6g}")
    for j in milp.binary_cols:
        if abs(x[j] - round(x[j])) > tol:
            out.append(f"integrality[{j}]: {x[j]:.6g}")
    return out


def to_triplet_dict(milp: MilpProblem) -> dict:
    """Sparse-triplet document for external cross-checking."""
    a_ub = milp.a_ub.tocoo()
    a_eq = milp.a_eq.tocoo()
    return {
        "format": "ebusopt-milp-triplets-v1",
        "n_cols": int(milp.n_cols),
        "objective": milp.c.tolist(),
        "objective_constant": milp.c0,
        "lb": milp.lb.tolist(),
        "ub": [None if not np.isfinite(v) else v for v in milp.ub.tolist()],
        "binary_cols": milp.binary_cols.tolist(),
        "ub_rows": {
            "row": a_ub.row.tolist(),
            "col": a_ub.col.tolist(),
            "val": a_ub.data.tolist(),
            "rhs": milp.b_ub.tolist(),
            "tags": list(milp.ub_tags),
        },
        "eq_rows": {
            "row": a_eq.row.tolist(),
            "col": a_eq.col.tolist(),
            "val": a_eq.data.tolist(),
            "rhs": milp.b_eq.tolist(),
            "tags": list(milp.eq_tags),
        },
    }


def to_lp_text(milp: MilpProblem) -> str:
    """Problem rendered in LP file format for external solvers."""

    def term(v, j):
        return f"{'+' if v >= 0 else '-'} {abs(v):.12g} x{j} "

    out = ["Minimize", " obj: "]
    obj = "".join(term(v, j) for j, v in enumerate(milp.c) if v != 0.0)
    out[-1] += obj if obj else "0 x0"
    out.append("Subject To")
    a_ub = milp.a_ub.tocsr()
    for r in range(a_ub.shape[0]):
        sl = a_ub[r]
        body = "".join(term(v, j) for j, v in zip(sl.indices, sl.data))
        out.append(f" {milp.ub_tags[r].replace('-', '_')}_{r}: {body}<= {milp.b_ub[r]:.12g}")
    a_eq = milp.a_eq.tocsr()
    for r in range(a_eq.shape[0]):
        sl = a_eq[r]
        body = "".join(term(v, j) for j, v in zip(sl.indices, sl.data))
        out.append(f" {milp.eq_tags[r].replace('-', '_')}_{r}: {body}= {milp.b_eq[r]:.12g}")
    out.append("Bounds")
    for j in range(milp.n_cols):
        hi = f"{milp.ub[j]:.12g}" if np.isfinite(milp.ub[j]) else "+inf"
        out.append(f" {milp.lb[j]:.12g} <= x{j} <= {hi}")
    bins = milp.binary_cols
    if len(bins):
        out.append("Binary")
        out.append(" " + " ".join(f"x{j}" for j in bins))
    out.append("End")
    return "\n".join(out) + "\n"


def save_triplet_json(milp: MilpProblem, path: str):
    with open(path, "w") as fh:
        json.dump(to_triplet_dict(milp), fh)
