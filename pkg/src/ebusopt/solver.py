"""LP and MILP solving.

LPs are handed to the HiGHS simplex through scipy (sparse, deterministic,
dual values per row).  The MILP search is a best-bound branch and bound over
the designated binary columns: branching on the most fractional binary with
lowest-index tie break, a rounding dive for incumbents, and deterministic
node ordering.  Node counts are reproducible whenever the search terminates
by optimality, gap, or node limit (a wall-clock cap necessarily is not).
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .milp import LinearProblem, MilpProblem

INTEGRALITY_TOL = 1e-6

_STATUS = {0: "optimal", 1: "limit", 2: "infeasible", 3: "unbounded", 4: "limit"}


@dataclass
class SolveLimits:
    time_s: float | None = None
    gap: float = 1e-9
    max_nodes: int | None = None
    max_lp_iter: int | None = None


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    duals_ub: np.ndarray | None = None
    duals_eq: np.ndarray | None = None
    duals_lb: np.ndarray | None = None
    duals_ub_bound: np.ndarray | None = None
    iterations: int = 0

    def dual_objective(self, lp: LinearProblem) -> float:
        """Dual value reconstructed from the marginals (equals the primal
        objective at optimality)."""
        total = lp.c0
        if self.duals_ub is not None and len(self.duals_ub):
            total += float(lp.b_ub @ self.duals_ub)
        if self.duals_eq is not None and len(self.duals_eq):
            total += float(lp.b_eq @ self.duals_eq)
        for bound, marg in ((lp.lb, self.duals_lb), (lp.ub, self.duals_ub_bound)):
            if marg is None:
                continue
            mask = (marg != 0.0) & np.isfinite(bound)
            total += float(bound[mask] @ marg[mask])
        return total


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    best_bound: float
    node_count: int
    lp_solves: int
    wall_time: float
    bound_history: list[float] = field(default_factory=list)

    @property
    def gap(self) -> float | None:
        if self.x is None or self.objective is None:
            return None
        denom = max(abs(self.objective), 1e-12)
        return max(self.objective - self.best_bound, 0.0) / denom


def solve_lp(
    lp: LinearProblem,
    limits: SolveLimits | None = None,
    lb: np.ndarray | None = None,
    ub: np.ndarray | None = None,
) -> LpSolution:
    """Solve an LP; optional ``lb``/``ub`` override the problem bounds."""
    limits = limits or SolveLimits()
    lo = lp.lb if lb is None else lb
    hi = lp.ub if ub is None else ub
    options: dict = {"presolve": True}
    if limits.max_lp_iter is not None:
        options["maxiter"] = int(limits.max_lp_iter)
    if limits.time_s is not None:
        options["time_limit"] = max(float(limits.time_s), 1e-3)
    res = linprog(
        c=lp.c,
        A_ub=lp.a_ub if lp.a_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.a_ub.shape[0] else None,
        A_eq=lp.a_eq if lp.a_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.a_eq.shape[0] else None,
        bounds=np.column_stack([lo, hi]),
        method="highs",
        options=options,
    )
    status = _STATUS.get(res.status, "limit")
    if status != "optimal":
        return LpSolution(status=status, x=None, objective=None,
                          iterations=int(getattr(res, "nit", 0) or 0))
    return LpSolution(
        status="optimal",
        x=np.asarray(res.x, dtype=float),
        objective=float(res.fun) + lp.c0,
        duals_ub=np.asarray(res.ineqlin.marginals) if lp.a_ub.shape[0] else np.zeros(0),
        duals_eq=np.asarray(res.eqlin.marginals) if lp.a_eq.shape[0] else np.zeros(0),
        duals_lb=np.asarray(res.lower.marginals),
        duals_ub_bound=np.asarray(res.upper.marginals),
        iterations=int(getattr(res, "nit", 0) or 0),
    )


def _most_fractional(x: np.ndarray, binary_cols: np.ndarray) -> int | None:
    vals = x[binary_cols]
    dist = np.abs(vals - np.round(vals))
    j = int(np.argmax(dist))
    if dist[j] <= INTEGRALITY_TOL:
        return None
    # argmax returns the lowest index among ties already
    return int(binary_cols[j])


def solve_milp(
    milp: MilpProblem,
    limits: SolveLimits | None = None,
    *,
    dive_every: int = 8,
    seed: int | None = None,
) -> MilpSolution:
    """Best-bound branch and bound on the binary columns.

    ``seed`` is accepted for interface stability; the search itself is
    deterministic and never draws randomness.
    """
    del seed
    limits = limits or SolveLimits()
    t0 = time.perf_counter()
    lp_solves = 0
    node_count = 0
    bound_history: list[float] = []

    def lp_at(lb, ub):
        nonlocal lp_solves
        lp_solves += 1
        rem = None
        if limits.time_s is not None:
            rem = limits.time_s - (time.perf_counter() - t0)
            if rem <= 0:
                return None
        return solve_lp(
            milp,
            SolveLimits(time_s=rem, max_lp_iter=limits.max_lp_iter),
            lb=lb,
            ub=ub,
        )

    root = lp_at(milp.lb, milp.ub)
    node_count += 1
    if root is None or root.status == "limit":
        return MilpSolution("limit", None, None, -np.inf, node_count, lp_solves,
                            time.perf_counter() - t0)
    if root.status in ("infeasible", "unbounded"):
        return MilpSolution(root.status, None, None,
                            -np.inf if root.status == "unbounded" else np.inf,
                            node_count, lp_solves, time.perf_counter() - t0)

    incumbent_x: np.ndarray | None = None
    incumbent_obj = np.inf
    bins = milp.binary_cols

    def try_incumbent(sol: LpSolution):
        nonlocal incumbent_x, incumbent_obj
        if sol.objective < incumbent_obj - 1e-12:
            incumbent_obj = sol.objective
            incumbent_x = sol.x

    def dive(lb, ub, x):
        """Fix every binary at its rounded value and resolve once."""
        dlb, dub = lb.copy(), ub.copy()
        vals = np.clip(np.round(x[bins]), dlb[bins], dub[bins])
        dlb[bins] = vals
        dub[bins] = vals
        sol = lp_at(dlb, dub)
        if sol is not None and sol.status == "optimal":
            try_incumbent(sol)

    counter = 0
    heap: list[tuple[float, int, LpSolution, np.ndarray, np.ndarray]] = []

    def push(sol: LpSolution, lb, ub):
        nonlocal counter
        branch = _most_fractional(sol.x, bins) if len(bins) else None
        if branch is None:
            try_incumbent(sol)
            return
        heapq.heappush(heap, (sol.objective, counter, sol, lb, ub))
        counter += 1

    if len(bins) and _most_fractional(root.x, bins) is not None:
        dive(milp.lb, milp.ub, root.x)
    push(root, milp.lb, milp.ub)

    best_bound = root.objective
    stopped: str | None = None  # None = search ran to exhaustion
    while heap and stopped is None:
        if limits.time_s is not None and time.perf_counter() - t0 > limits.time_s:
            stopped = "cap"
            break
        if limits.max_nodes is not None and node_count >= limits.max_nodes:
            stopped = "cap"
            break
        bound, _, sol, lb, ub = heapq.heappop(heap)
        best_bound = max(best_bound, bound)
        bound_history.append(best_bound)
        if incumbent_x is not None:
            if bound >= incumbent_obj - 1e-9 * max(1.0, abs(incumbent_obj)):
                continue  # cannot improve on the incumbent
            denom = max(abs(incumbent_obj), 1e-12)
            if (incumbent_obj - bound) / denom <= limits.gap:
                stopped = "gap"
                break

        branch = _most_fractional(sol.x, bins)
        if branch is None:
            try_incumbent(sol)
            continue
        node_count += 1
        if dive_every and node_count % dive_every == 0:
            dive(lb, ub, sol.x)
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[branch] = cub[branch] = val
            child = lp_at(clb, cub)
            if child is None or child.status == "limit":
                stopped = "cap"
                break
            if child.status != "optimal":
                continue
            if incumbent_x is not None and child.objective >= incumbent_obj - 1e-12:
                continue
            push(child, clb, cub)

    if stopped == "gap":
        status = "optimal"
    elif stopped == "cap":
        status = "feasible" if incumbent_x is not None else "limit"
    elif incumbent_x is not None:
        # Search exhausted: the incumbent is proven optimal.
        best_bound = incumbent_obj
        status = "optimal"
    else:
        status = "infeasible"
        best_bound = np.inf

    return MilpSolution(
        status=status,
        x=incumbent_x,
        objective=incumbent_obj if incumbent_x is not None else None,
        best_bound=float(best_bound),
        node_count=node_count,
        lp_solves=lp_solves,
        wall_time=time.perf_counter() - t0,
        bound_history=bound_history,
    )
